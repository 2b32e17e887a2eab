/**
 * Writer/reader for the MILF tile-feature binary format.
 *
 * Layout (little-endian):
 *   "MILF" | u16 version=1 | u16 flags (bit0 = coords present) |
 *   u32 dim | u64 rows | u16 slide_id len + bytes |
 *   u16 encoder_id len + bytes | zero pad to a 64-byte boundary |
 *   rows*dim float32 row-major | optional rows*2 u32 tile origins.
 */

export const MILF_MAGIC = 'MILF';
export const MILF_VERSION = 1;
const FLAG_COORDS = 1;

export interface FeatureMatrix {
  slideId: string;
  encoderId: string;
  dim: number;
  /** row-major, rows*dim entries */
  data: Float32Array;
  /** optional (x, y) tile origins, rows*2 entries */
  coords?: Uint32Array;
}

export function rowsOf(m: FeatureMatrix): number {
  if (m.dim <= 0) throw new Error('feature dim must be positive');
  if (m.data.length % m.dim !== 0) {
    throw new Error('data length is not a multiple of dim');
  }
  return m.data.length / m.dim;
}

export function encodeMilf(m: FeatureMatrix): Buffer {
  const rows = rowsOf(m);
  if (m.coords && m.coords.length !== rows * 2) {
    throw new Error('coords must hold rows*2 entries');
  }
  for (const v of m.data) {
    if (!Number.isFinite(v)) throw new Error('payload contains NaN/Inf');
  }
  const sid = Buffer.from(m.slideId, 'utf-8');
  const eid = Buffer.from(m.encoderId, 'utf-8');
  const headLen = 4 + 2 + 2 + 4 + 8 + 2 + sid.length + 2 + eid.length;
  const padded = Math.ceil(headLen / 64) * 64;
  const head = Buffer.alloc(padded); // zero-filled pad
  let off = head.write(MILF_MAGIC, 0, 'ascii');
  off = head.writeUInt16LE(MILF_VERSION, off);
  off = head.writeUInt16LE(m.coords ? FLAG_COORDS : 0, off);
  off = head.writeUInt32LE(m.dim, off);
  off = Number(head.writeBigUInt64LE(BigInt(rows), off));
  off = head.writeUInt16LE(sid.length, off);
  off += sid.copy(head, off);
  off = head.writeUInt16LE(eid.length, off);
  off += eid.copy(head, off);

  const payload = Buffer.alloc(rows * m.dim * 4);
  for (let i = 0; i < m.data.length; i++) {
    payload.writeFloatLE(m.data[i], i * 4);
  }
  const parts = [head, payload];
  if (m.coords) {
    const coords = Buffer.alloc(rows * 8);
    for (let i = 0; i < m.coords.length; i++) {
      coords.writeUInt32LE(m.coords[i], i * 4);
    }
    parts.push(coords);
  }
  return Buffer.concat(parts);
}

export function decodeMilf(blob: Buffer): FeatureMatrix {
  if (blob.length < 20 || blob.toString('ascii', 0, 4) !== MILF_MAGIC) {
    throw new Error('not a MILF feature file');
  }
  const version = blob.readUInt16LE(4);
  if (version !== MILF_VERSION) {
    throw new Error(`unsupported version ${version}`);
  }
  const flags = blob.readUInt16LE(6);
  const dim = blob.readUInt32LE(8);
  const rows = Number(blob.readBigUInt64LE(12));
  let off = 20;
  const sidLen = blob.readUInt16LE(off);
  const slideId = blob.toString('utf-8', off + 2, off + 2 + sidLen);
  off += 2 + sidLen;
  const eidLen = blob.readUInt16LE(off);
  const encoderId = blob.toString('utf-8', off + 2, off + 2 + eidLen);
  off += 2 + eidLen;
  off = Math.ceil(off / 64) * 64;
  if (blob.length < off + rows * dim * 4) {
    throw new Error('payload shorter than rows*dim*4');
  }
  const data = new Float32Array(rows * dim);
  for (let i = 0; i < data.length; i++) {
    data[i] = blob.readFloatLE(off + i * 4);
  }
  let coords: Uint32Array | undefined;
  if (flags & FLAG_COORDS) {
    const coff = off + rows * dim * 4;
    if (blob.length < coff + rows * 8) {
      throw new Error('coordinate block truncated');
    }
    coords = new Uint32Array(rows * 2);
    for (let i = 0; i < coords.length; i++) {
      coords[i] = blob.readUInt32LE(coff + i * 4);
    }
  }
  return { slideId, encoderId, dim, data, coords };
}

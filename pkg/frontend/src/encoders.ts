/**
 * Tile encoders. The production entry point would wrap a real pretrained
 * vision backbone; the `debug-16` encoder is a deterministic stand-in
 * whose output is hand-computable: the 224x224 RGB crop is averaged over
 * a 4x4 block grid (56x56 pixels per block, all three channels pooled
 * together) and scaled to [0, 1] by dividing by 255.
 */

export interface TileCrop {
  /** interleaved RGBA, width*height*4 bytes (PNG decoder layout) */
  pixels: Uint8Array;
  width: number;
  height: number;
}

export interface Encoder {
  id: string;
  dim: number;
  encode(crop: TileCrop): Float32Array;
}

export function debugEncoder(grid = 4): Encoder {
  return {
    id: `debug-${grid * grid}`,
    dim: grid * grid,
    encode(crop: TileCrop): Float32Array {
      if (crop.width % grid !== 0 || crop.height % grid !== 0) {
        throw new Error(
          `crop ${crop.width}x${crop.height} not divisible into a ` +
            `${grid}x${grid} block grid`,
        );
      }
      const bw = crop.width / grid;
      const bh = crop.height / grid;
      const out = new Float32Array(grid * grid);
      for (let by = 0; by < grid; by++) {
        for (let bx = 0; bx < grid; bx++) {
          let sum = 0;
          for (let y = by * bh; y < (by + 1) * bh; y++) {
            for (let x = bx * bw; x < (bx + 1) * bw; x++) {
              const o = (y * crop.width + x) * 4;
              sum += crop.pixels[o] + crop.pixels[o + 1] + crop.pixels[o + 2];
            }
          }
          out[by * grid + bx] = Math.fround(sum / (bw * bh * 3 * 255));
        }
      }
      return out;
    },
  };
}

const REGISTRY: Record<string, () => Encoder> = {
  'debug-16': () => debugEncoder(4),
  'debug-4': () => debugEncoder(2),
};

export function resolveEncoder(id: string): Encoder {
  const make = REGISTRY[id];
  if (!make) {
    throw new Error(
      `unknown encoder "${id}" (available: ${Object.keys(REGISTRY).join(', ')})`,
    );
  }
  return make();
}

/** Parser for the tile-grid CSV emitted by the benchmarking tool. */
import { readFileSync } from 'node:fs';

export interface TileGrid {
  slideId: string;
  tilePx: number;
  targetMpp: number;
  tiles: Array<{ x: number; y: number; tissueFrac: number }>;
}

const HEADER = 'slide_id,x,y,tile_px,target_mpp,tissue_frac';

export function parseTileGridCsv(path: string): TileGrid {
  const lines = readFileSync(path, 'utf-8')
    .split(/\r?\n/)
    .filter((ln) => ln.length > 0 && !ln.startsWith('#'));
  if (lines.length === 0 || lines[0] !== HEADER) {
    throw new Error(`${path}: expected header "${HEADER}"`);
  }
  const grid: TileGrid = { slideId: '', tilePx: 0, targetMpp: 0, tiles: [] };
  for (const line of lines.slice(1)) {
    const cells = line.split(',');
    if (cells.length !== 6) throw new Error(`${path}: malformed row "${line}"`);
    const [slideId, x, y, tilePx, targetMpp, frac] = cells;
    if (grid.tiles.length === 0) {
      grid.slideId = slideId;
      grid.tilePx = Number(tilePx);
      grid.targetMpp = Number(targetMpp);
    } else if (slideId !== grid.slideId) {
      throw new Error(`${path}: mixed slide ids`);
    }
    grid.tiles.push({
      x: Number(x),
      y: Number(y),
      tissueFrac: Number(frac),
    });
  }
  return grid;
}

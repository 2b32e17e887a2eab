/**
 * export_features: run an encoder over pre-cropped tile images at the
 * grid's coordinates, in grid order, and write a MILF feature file the
 * benchmarking tool's reader accepts.
 *
 * Tile imagery convention: <images>/<slide_id>/<x>_<y>.png, one 224x224
 * (or tile_px-sized) crop per grid row.
 */
import { existsSync, readFileSync, writeFileSync } from 'node:fs';
import { basename, join } from 'node:path';
import { PNG } from 'pngjs';

import { Encoder, TileCrop, resolveEncoder } from './encoders.js';
import { encodeMilf } from './milf.js';
import { TileGrid, parseTileGridCsv } from './grid.js';

export interface AdapterJob {
  encoder: string;
  gridPath: string;
  imagesDir: string;
  outPath: string;
}

function loadCrop(path: string): TileCrop {
  const png = PNG.sync.read(readFileSync(path));
  return { pixels: png.data, width: png.width, height: png.height };
}

function slideIdFor(grid: TileGrid, gridPath: string): string {
  if (grid.slideId) return grid.slideId;
  // zero-tile grids carry no rows; fall back to the <slide>.tiles.csv stem
  return basename(gridPath).replace(/\.tiles\.csv$|\.csv$/, '');
}

export function exportFeatures(job: AdapterJob): void {
  const encoder: Encoder = resolveEncoder(job.encoder);
  const grid = parseTileGridCsv(job.gridPath);
  const slideId = slideIdFor(grid, job.gridPath);

  const missing = grid.tiles.filter(
    (t) => !existsSync(join(job.imagesDir, slideId, `${t.x}_${t.y}.png`)),
  );
  if (missing.length > 0) {
    const list = missing.map((t) => `(${t.x}, ${t.y})`).join(', ');
    throw new Error(`missing tile crops for ${slideId}: ${list}`);
  }

  const data = new Float32Array(grid.tiles.length * encoder.dim);
  const coords = new Uint32Array(grid.tiles.length * 2);
  grid.tiles.forEach((tile, i) => {
    const crop = loadCrop(join(job.imagesDir, slideId, `${tile.x}_${tile.y}.png`));
    const vec = encoder.encode(crop);
    if (vec.length !== encoder.dim) {
      throw new Error(
        `encoder "${encoder.id}" produced dim ${vec.length}, ` +
          `expected ${encoder.dim}`,
      );
    }
    data.set(vec, i * encoder.dim);
    coords[i * 2] = tile.x;
    coords[i * 2 + 1] = tile.y;
  });

  const blob = encodeMilf({
    slideId,
    encoderId: encoder.id, // recorded verbatim
    dim: encoder.dim,
    data,
    coords: grid.tiles.length > 0 ? coords : undefined,
  });
  writeFileSync(job.outPath, blob);
}

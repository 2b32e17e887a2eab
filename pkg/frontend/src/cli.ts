#!/usr/bin/env node
/** CLI: export --encoder <id> --grid <csv> --images <dir> --out <file> */
import { parseArgs } from 'node:util';

import { exportFeatures } from './export.js';

export function main(argv: string[]): number {
  const [command, ...rest] = argv;
  if (command !== 'export') {
    console.error('usage: milbench-export export --encoder <id> ' +
      '--grid <csv> --images <dir> --out <file>');
    return 1;
  }
  let values;
  try {
    ({ values } = parseArgs({
      args: rest,
      options: {
        encoder: { type: 'string' },
        grid: { type: 'string' },
        images: { type: 'string' },
        out: { type: 'string' },
      },
    }));
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
  const { encoder, grid, images, out } = values;
  if (!encoder || !grid || !images || !out) {
    console.error('error: --encoder, --grid, --images and --out are required');
    return 1;
  }
  try {
    exportFeatures({ encoder, gridPath: grid, imagesDir: images, outPath: out });
  } catch (err) {
    console.error(`error: ${(err as Error).message}`);
    return 1;
  }
  return 0;
}

if (import.meta.url === `file://${process.argv[1]}`) {
  process.exit(main(process.argv.slice(2)));
}

/**
 * Shared fixtures for the dashboard tests.
 *
 * Golden states are produced by scripts/make_goldens.py from the pipeline's
 * own grading code; the suites here replay them through the client store.
 */

import { readFileSync } from 'node:fs';
import { dirname, join } from 'node:path';
import { fileURLToPath } from 'node:url';

import { adjustBoundary, initPool, toggleInclusion } from '../src/store.js';
import type { Boundaries, PaperRow, PoolState, StarLabel } from '../src/types.js';

export interface GoldenPaper {
  label: string;
  mean: number;
  min: number;
  max: number;
  included: boolean;
}

export interface GoldenState {
  name: string;
  boundaries: Boundaries;
  papers: GoldenPaper[];
  expected: {
    profile: { pct4: number; pct3: number; pct2: number; pct1: number; pctU: number };
    gpa: number;
    qrShare: number;
    grades: Record<string, StarLabel>;
  };
}

const here = dirname(fileURLToPath(import.meta.url));

export const goldenStates: GoldenState[] = JSON.parse(
  readFileSync(join(here, 'fixtures', 'golden_states.json'), 'utf8'),
).states;

/** Service rows carry per-criterion scores; the goldens only need means. */
export const toPaperRow = (p: GoldenPaper): PaperRow => ({
  label: p.label,
  mean: p.mean,
  min: p.min,
  max: p.max,
  rigour: p.mean,
  originality: p.mean,
  significance: p.mean,
  comments: { rigour: '', originality: '', significance: '' },
});

/** Build the pool the way the app would: load everything, then exclude. */
export function poolFromGolden(g: GoldenState): PoolState {
  let state = initPool(
    'University Z',
    'job-under-test',
    'digest-under-test',
    g.papers.map(toPaperRow),
    g.boundaries,
  );
  for (const p of g.papers) {
    if (!p.included) state = toggleInclusion(state, p.label);
  }
  return state;
}

/**
 * Drag the three sliders until they sit on the target cuts.  A single pass
 * can be clamped by a neighbour that has not moved yet, so sweep a few
 * times; the golden sets keep their cuts far enough apart to converge.
 */
export function slideTo(state: PoolState, target: Boundaries): PoolState {
  for (let pass = 0; pass < 3; pass++) {
    for (const key of ['b12', 'b23', 'b34'] as const) {
      state = adjustBoundary(state, key, target[key]);
    }
  }
  return state;
}

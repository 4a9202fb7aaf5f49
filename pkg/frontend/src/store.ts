/**
 * Pure pool-state transitions.
 *
 * Every operation takes a state and returns a new one; the app layer keeps
 * the current state and re-renders after each transition.  Projection and
 * borderline queue are always recomputed from exactly the included papers
 * and the active boundaries, never patched incrementally.
 */

import type {
  Boundaries,
  BoundaryKey,
  JournalEntry,
  PaperRow,
  PoolPaper,
  PoolState,
} from './types.js';
import { assignStar, fmt2, projectProfile } from './grading.js';

/** Slider granularity; also the smallest allowed gap between two cuts. */
export const SLIDER_STEP = 0.01;

const clone = (b: Boundaries): Boundaries => ({ b12: b.b12, b23: b.b23, b34: b.b34 });

const entry = (action: string): JournalEntry => ({ at: new Date().toISOString(), action });

function derive(state: PoolState): PoolState {
  const included = state.papers.filter((p) => p.included);
  const projection =
    included.length > 0
      ? projectProfile(included.map((p) => p.mean), state.boundaries)
      : null;
  // Proximity to the funding cut decides scrutiny order; label breaks ties
  // so the queue cannot reshuffle under unrelated changes.
  const borderline = included
    .map((p) => ({ label: p.label, distance: Math.abs(p.mean - state.boundaries.b23) }))
    .sort((a, b) => a.distance - b.distance || a.label.localeCompare(b.label))
    .map((q) => q.label);
  return { ...state, projection, borderline };
}

export function initPool(
  institution: string,
  scoreJobId: string,
  promptDigest: string,
  papers: PaperRow[],
  overall: Boundaries,
): PoolState {
  const pool: PoolPaper[] = papers.map((p) => ({ ...p, included: true, humanNote: '' }));
  return derive({
    institution,
    scoreJobId,
    promptDigest,
    papers: pool,
    defaults: clone(overall),
    boundaries: clone(overall),
    projection: null,
    borderline: [],
    highlighted: [],
    journal: [],
  });
}

function findPaper(state: PoolState, label: string): PoolPaper {
  const paper = state.papers.find((p) => p.label === label);
  if (!paper) throw new Error(`no paper labelled ${JSON.stringify(label)}`);
  return paper;
}

export function toggleInclusion(state: PoolState, label: string): PoolState {
  const paper = findPaper(state, label);
  const papers = state.papers.map((p) =>
    p.label === label ? { ...p, included: !p.included } : p,
  );
  const action = `${paper.included ? 'excluded' : 'included'} ${label}`;
  return derive({ ...state, papers, journal: [...state.journal, entry(action)] });
}

export function setNote(state: PoolState, label: string, note: string): PoolState {
  findPaper(state, label);
  const papers = state.papers.map((p) =>
    p.label === label ? { ...p, humanNote: note } : p,
  );
  return { ...state, papers };
}

/** Clamp a requested cut so the three stay strictly ordered on the scale. */
export function clampBoundary(b: Boundaries, which: BoundaryKey, value: number): number {
  const lo = which === 'b12' ? 0 : which === 'b23' ? b.b12 + SLIDER_STEP : b.b23 + SLIDER_STEP;
  const hi = which === 'b34' ? 100 : which === 'b23' ? b.b34 - SLIDER_STEP : b.b23 - SLIDER_STEP;
  const snapped = Math.round(value * 100) / 100;
  return Math.min(hi, Math.max(lo, snapped));
}

function applyBoundaries(state: PoolState, next: Boundaries, action: string): PoolState {
  const before = state.boundaries;
  const highlighted = state.papers
    .filter((p) => assignStar(p.mean, before) !== assignStar(p.mean, next))
    .map((p) => p.label);
  return derive({
    ...state,
    boundaries: next,
    highlighted,
    journal: [...state.journal, entry(action)],
  });
}

export function adjustBoundary(
  state: PoolState,
  which: BoundaryKey,
  value: number,
): PoolState {
  const clamped = clampBoundary(state.boundaries, which, value);
  if (clamped === state.boundaries[which]) return state;
  const next = { ...clone(state.boundaries), [which]: clamped };
  return applyBoundaries(state, next, `${which} -> ${fmt2(clamped)}`);
}

/** Install a complete boundary set, e.g. from an imported decision file. */
export function setBoundaries(state: PoolState, next: Boundaries): PoolState {
  if (!(next.b12 < next.b23 && next.b23 < next.b34)) {
    throw new Error(`boundaries out of order: ${next.b12}, ${next.b23}, ${next.b34}`);
  }
  const current = state.boundaries;
  if (next.b12 === current.b12 && next.b23 === current.b23 && next.b34 === current.b34) {
    return state;
  }
  return applyBoundaries(state, clone(next), 'boundaries imported');
}

export function resetBoundaries(state: PoolState): PoolState {
  const next = clone(state.defaults);
  if (
    next.b12 === state.boundaries.b12 &&
    next.b23 === state.boundaries.b23 &&
    next.b34 === state.boundaries.b34
  ) {
    return state;
  }
  return applyBoundaries(state, next, 'boundaries reset to service values');
}

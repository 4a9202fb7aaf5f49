/**
 * Client-side grading math.
 *
 * Deliberately duplicates the pipeline's rules so sliders and toggles give
 * instant feedback; the golden-state parity tests hold this file to the
 * pipeline's answers, which remain the source of truth.
 */

import type { Boundaries, Profile, Projection, StarLabel } from './types.js';

/** A score equal to a cut maps to the higher grade. */
export function assignStar(score: number, b: Boundaries): StarLabel {
  if (score >= b.b34) return '4*';
  if (score >= b.b23) return '3*';
  if (score >= b.b12) return '2*';
  return '1*';
}

/** Profile, GPA and QR share of a non-empty score list under the cuts. */
export function projectProfile(scores: number[], b: Boundaries): Projection {
  if (scores.length === 0) {
    throw new Error('cannot project a profile from no scores');
  }
  const tally: Record<StarLabel, number> = { '4*': 0, '3*': 0, '2*': 0, '1*': 0 };
  for (const score of scores) {
    tally[assignStar(score, b)] += 1;
  }
  const n = scores.length;
  const profile: Profile = {
    pct4: (100.0 * tally['4*']) / n,
    pct3: (100.0 * tally['3*']) / n,
    pct2: (100.0 * tally['2*']) / n,
    pct1: (100.0 * tally['1*']) / n,
    pctU: 0.0,
  };
  const gpa =
    (4 * profile.pct4 + 3 * profile.pct3 + 2 * profile.pct2 + 1 * profile.pct1) / 100.0;
  return { profile, gpa, qrShare: profile.pct4 + profile.pct3 };
}

export const round2 = (value: number): number => Math.round(value * 100) / 100;

export const fmt2 = (value: number): string => value.toFixed(2);

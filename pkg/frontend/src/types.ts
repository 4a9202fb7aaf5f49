/**
 * Shared domain types for the pool dashboard.
 *
 * Scores come from the job service and are never edited here; everything
 * the dashboard changes (inclusion, notes, active boundaries) lives next
 * to them and feeds the derived projection.
 */

/** The three grade cuts on the 0-100 score scale, strictly ordered. */
export interface Boundaries {
  b12: number;
  b23: number;
  b34: number;
}

export type BoundaryKey = keyof Boundaries;

export type StarLabel = '4*' | '3*' | '2*' | '1*';

/** One scored paper as served by the institution scores endpoint. */
export interface PaperRow {
  label: string;
  mean: number;
  min: number;
  max: number;
  rigour: number;
  originality: number;
  significance: number;
  comments: { rigour: string; originality: string; significance: string };
}

/** A paper inside the pool: service scores plus the manager's decisions. */
export interface PoolPaper extends PaperRow {
  included: boolean;
  humanNote: string;
}

/** Percentage of the included pool at each grade (pctU stays 0: the
 * dashboard works above the 1* line). */
export interface Profile {
  pct4: number;
  pct3: number;
  pct2: number;
  pct1: number;
  pctU: number;
}

export interface Projection {
  profile: Profile;
  gpa: number;
  qrShare: number;
}

export interface JournalEntry {
  at: string; // ISO timestamp
  action: string;
}

export interface PoolState {
  institution: string;
  scoreJobId: string;
  promptDigest: string;
  papers: PoolPaper[];
  /** Service-provided overall cuts; the reset target. */
  defaults: Boundaries;
  /** Active cuts driving grades and the projection. */
  boundaries: Boundaries;
  /** null when every paper is excluded — the UI shows an empty-pool warning. */
  projection: Projection | null;
  /** Included papers ordered by how close their mean sits to b23. */
  borderline: string[];
  /** Papers whose grade changed on the last boundary move. */
  highlighted: string[];
  journal: JournalEntry[];
}

/**
 * Client for the refpool job service.
 *
 * The dashboard reads three things: the latest overall boundaries, one
 * institution's scored papers, and the scoring run's prompt digest (from
 * the run_meta.json artifact).  All three are fetched before any state is
 * built, so a failure never leaves a partial render.
 */

import type { Boundaries, PaperRow, PoolState } from './types.js';
import { initPool } from './store.js';

export class ServiceError extends Error {
  constructor(
    message: string,
    /** true when retrying might help (network, 5xx); false for bad input. */
    readonly retryable: boolean,
  ) {
    super(message);
    this.name = 'ServiceError';
  }
}

export type FetchLike = (url: string) => Promise<Response>;

async function getJson(fetchFn: FetchLike, url: string): Promise<any> {
  let response: Response;
  try {
    response = await fetchFn(url);
  } catch (err) {
    throw new ServiceError(`service unreachable: ${String(err)}`, true);
  }
  if (!response.ok) {
    const retryable = response.status >= 500;
    throw new ServiceError(`${url} -> ${response.status}`, retryable);
  }
  return response.json();
}

export async function fetchOverallBoundaries(
  base: string,
  fetchFn: FetchLike = fetch,
): Promise<{ jobId: string; points: Boundaries }> {
  const body = await getJson(fetchFn, `${base}/boundaries/overall`);
  const b = body.boundaries ?? {};
  for (const key of ['b12', 'b23', 'b34']) {
    if (typeof b[key]?.point !== 'number') {
      throw new ServiceError(`overall boundaries missing ${key}`, false);
    }
  }
  return {
    jobId: String(body.job_id ?? ''),
    points: { b12: b.b12.point, b23: b.b23.point, b34: b.b34.point },
  };
}

export async function fetchInstitutionScores(
  base: string,
  label: string,
  fetchFn: FetchLike = fetch,
): Promise<{ jobId: string; papers: PaperRow[] }> {
  const body = await getJson(
    fetchFn,
    `${base}/institutions/${encodeURIComponent(label)}/scores`,
  );
  const papers: PaperRow[] = (body.papers ?? []).map((p: any) => ({
    label: String(p.label),
    mean: Number(p.mean),
    min: Number(p.min),
    max: Number(p.max),
    rigour: Number(p.rigour),
    originality: Number(p.originality),
    significance: Number(p.significance),
    comments: {
      rigour: String(p.comments?.rigour ?? ''),
      originality: String(p.comments?.originality ?? ''),
      significance: String(p.comments?.significance ?? ''),
    },
  }));
  return { jobId: String(body.job_id ?? ''), papers };
}

export async function fetchPromptDigest(
  base: string,
  scoreJobId: string,
  fetchFn: FetchLike = fetch,
): Promise<string> {
  try {
    const meta = await getJson(
      fetchFn,
      `${base}/jobs/${scoreJobId}/artifacts/run_meta.json`,
    );
    return String(meta.prompt_digest ?? '');
  } catch {
    // The digest is provenance, not plumbing; an old run without the
    // artifact must not block loading.
    return '';
  }
}

export async function loadInstitution(
  base: string,
  label: string,
  fetchFn: FetchLike = fetch,
): Promise<PoolState> {
  if (!label.trim()) {
    throw new ServiceError('enter an institution label', false);
  }
  const overall = await fetchOverallBoundaries(base, fetchFn);
  const scores = await fetchInstitutionScores(base, label.trim(), fetchFn);
  const digest = await fetchPromptDigest(base, scores.jobId, fetchFn);
  return initPool(label.trim(), scores.jobId, digest, scores.papers, overall.points);
}

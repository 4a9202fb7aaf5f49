/**
 * Decision file export and re-import.
 *
 * The export records what the manager decided (inclusion, notes) and under
 * which cuts, plus the scoring run's prompt digest for provenance.  Boundary
 * values are written at full precision so re-importing a file reproduces the
 * projection exactly.
 */

import type { Boundaries, PoolState } from './types.js';
import { assignStar } from './grading.js';
import { setBoundaries, setNote, toggleInclusion } from './store.js';

const needsQuoting = /[",]/;

// The reader splits on newlines before unquoting, so fields are kept to a
// single line; notes are typed into one-line inputs anyway.
const csvField = (value: string): string => {
  const flat = value.replace(/\s*\r?\n\s*/g, ' ');
  return needsQuoting.test(flat) ? `"${flat.replace(/"/g, '""')}"` : flat;
};

export function exportDecisions(state: PoolState): string {
  const b = state.boundaries;
  const lines = [
    '# pool-studio decisions',
    `# institution: ${state.institution}`,
    `# boundaries: b12=${b.b12} b23=${b.b23} b34=${b.b34}`,
    `# prompts: ${state.promptDigest}`,
    'paper,included,grade,note',
  ];
  for (const paper of state.papers) {
    lines.push(
      [
        csvField(paper.label),
        String(paper.included),
        assignStar(paper.mean, b),
        csvField(paper.humanNote),
      ].join(','),
    );
  }
  return lines.join('\n') + '\n';
}

export interface ImportedDecisions {
  institution: string;
  boundaries: Boundaries;
  promptDigest: string;
  rows: { label: string; included: boolean; note: string }[];
}

function splitCsvLine(line: string): string[] {
  const fields: string[] = [];
  let current = '';
  let quoted = false;
  for (let i = 0; i < line.length; i++) {
    const ch = line[i];
    if (quoted) {
      if (ch === '"' && line[i + 1] === '"') {
        current += '"';
        i++;
      } else if (ch === '"') {
        quoted = false;
      } else {
        current += ch;
      }
    } else if (ch === '"') {
      quoted = true;
    } else if (ch === ',') {
      fields.push(current);
      current = '';
    } else {
      current += ch;
    }
  }
  fields.push(current);
  return fields;
}

export function importDecisions(text: string): ImportedDecisions {
  const lines = text.split('\n').filter((line) => line.length > 0);
  const header = (prefix: string): string => {
    const line = lines.find((l) => l.startsWith(prefix));
    if (line === undefined) throw new Error(`decision file missing "${prefix}"`);
    return line.slice(prefix.length).trim();
  };
  const boundaryText = header('# boundaries:');
  const match = /b12=(\S+) b23=(\S+) b34=(\S+)/.exec(boundaryText);
  if (!match) throw new Error(`unreadable boundaries: ${boundaryText}`);
  const rows = lines
    .filter((l) => !l.startsWith('#') && !l.startsWith('paper,'))
    .map((line) => {
      const [label, included, , note] = splitCsvLine(line);
      return { label, included: included === 'true', note: note ?? '' };
    });
  return {
    institution: header('# institution:'),
    boundaries: {
      b12: Number(match[1]),
      b23: Number(match[2]),
      b34: Number(match[3]),
    },
    promptDigest: header('# prompts:'),
    rows,
  };
}

/** Replay an imported decision file onto a freshly loaded pool. */
export function applyDecisions(state: PoolState, imported: ImportedDecisions): PoolState {
  if (imported.institution !== state.institution) {
    throw new Error(
      `decision file is for ${imported.institution}, not ${state.institution}`,
    );
  }
  let next = state;
  for (const row of imported.rows) {
    const paper = state.papers.find((p) => p.label === row.label);
    if (!paper) throw new Error(`decision file names unknown paper ${row.label}`);
    if (paper.included !== row.included) next = toggleInclusion(next, row.label);
    if (row.note) next = setNote(next, row.label, row.note);
  }
  // Boundary values were written at full precision, so this lands exactly
  // back on the exported cuts and the reprojected profile matches the one
  // the file was exported under.
  return setBoundaries(next, imported.boundaries);
}

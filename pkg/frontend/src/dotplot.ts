/**
 * Dot plot of a submission pool.
 *
 * One row per paper, ranked by mean score, with a light min-to-max bar and a
 * solid dot on the mean.  The three active cuts are drawn as vertical lines
 * so dragging a slider visibly sweeps papers across a grade edge.  Renders
 * to an SVG string: the app drops it into a container, the tests parse it.
 */

import type { Boundaries, PoolState, StarLabel } from './types.js';
import { assignStar, fmt2 } from './grading.js';

export interface DotPlotLayout {
  width: number;
  rowHeight: number;
  marginLeft: number;
  marginRight: number;
  marginTop: number;
  marginBottom: number;
}

export const DEFAULT_LAYOUT: DotPlotLayout = {
  width: 920,
  rowHeight: 18,
  marginLeft: 170,
  marginRight: 24,
  marginTop: 30,
  marginBottom: 10,
};

const STAR_COLORS: Record<StarLabel, string> = {
  '4*': '#1a7f37',
  '3*': '#0969da',
  '2*': '#9a6700',
  '1*': '#cf222e',
};

const CUT_COLOR = '#6e40c9';
const HIGHLIGHT_COLOR = '#d4a72c';

const esc = (text: string): string =>
  text
    .replace(/&/g, '&amp;')
    .replace(/</g, '&lt;')
    .replace(/>/g, '&gt;')
    .replace(/"/g, '&quot;');

const px = (value: number): string => value.toFixed(1);

/** Scores live on the 0-100 scale; map them onto the plot area. */
const scaleX = (layout: DotPlotLayout) => {
  const span = layout.width - layout.marginLeft - layout.marginRight;
  return (score: number): number => layout.marginLeft + (span * score) / 100;
};

function cutLine(
  key: keyof Boundaries,
  value: number,
  x: (score: number) => number,
  top: number,
  bottom: number,
): string {
  const at = x(value);
  return [
    `<g class="cut" data-cut="${key}" data-value="${value}">`,
    `<line x1="${px(at)}" y1="${top}" x2="${px(at)}" y2="${bottom}" ` +
      `stroke="${CUT_COLOR}" stroke-dasharray="4 3"/>`,
    `<text x="${px(at)}" y="${top - 8}" text-anchor="middle" ` +
      `font-size="11" fill="${CUT_COLOR}">${key} ${fmt2(value)}</text>`,
    '</g>',
  ].join('');
}

export function renderDotPlot(
  state: PoolState,
  layout: DotPlotLayout = DEFAULT_LAYOUT,
): string {
  const ranked = [...state.papers].sort(
    (a, b) => b.mean - a.mean || a.label.localeCompare(b.label),
  );
  const x = scaleX(layout);
  const plotBottom = layout.marginTop + ranked.length * layout.rowHeight;
  const height = plotBottom + layout.marginBottom;
  const highlighted = new Set(state.highlighted);

  const parts: string[] = [
    `<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 ${layout.width} ${height}" ` +
      `width="${layout.width}" height="${height}" role="img">`,
  ];
  const b = state.boundaries;
  parts.push(cutLine('b12', b.b12, x, layout.marginTop, plotBottom));
  parts.push(cutLine('b23', b.b23, x, layout.marginTop, plotBottom));
  parts.push(cutLine('b34', b.b34, x, layout.marginTop, plotBottom));

  ranked.forEach((paper, i) => {
    const cy = layout.marginTop + i * layout.rowHeight + layout.rowHeight / 2;
    const star = assignStar(paper.mean, b);
    const opacity = paper.included ? '1' : '0.25';
    const row = [
      `<g class="paper-row" data-label="${esc(paper.label)}" ` +
        `data-included="${paper.included}" opacity="${opacity}">`,
      `<text x="${layout.marginLeft - 8}" y="${px(cy + 3.5)}" text-anchor="end" ` +
        `font-size="11" fill="#57606a">${esc(paper.label)}</text>`,
      `<line x1="${px(x(paper.min))}" y1="${px(cy)}" x2="${px(x(paper.max))}" ` +
        `y2="${px(cy)}" stroke="#d0d7de" stroke-width="4" stroke-linecap="round"/>`,
    ];
    if (highlighted.has(paper.label)) {
      row.push(
        `<circle class="grade-change" cx="${px(x(paper.mean))}" cy="${px(cy)}" r="7.5" ` +
          `fill="none" stroke="${HIGHLIGHT_COLOR}" stroke-width="2.5"/>`,
      );
    }
    row.push(
      `<circle class="mean" cx="${px(x(paper.mean))}" cy="${px(cy)}" r="4" ` +
        `fill="${STAR_COLORS[star]}"><title>${esc(paper.label)}: ` +
        `${fmt2(paper.min)} / ${fmt2(paper.mean)} / ${fmt2(paper.max)} (${star})</title></circle>`,
      '</g>',
    );
    parts.push(row.join(''));
  });

  parts.push('</svg>');
  return parts.join('\n');
}

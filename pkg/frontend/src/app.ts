/**
 * Dashboard wiring.
 *
 * Keeps the single PoolState, applies a store transition on every control
 * event, and re-renders the affected panels.  All grading math lives in
 * grading.ts and store.ts; this file only moves values in and out of the
 * DOM, which is why the test suite can hold the logic without a browser.
 */

import { ServiceError, loadInstitution } from './api.js';
import { renderDotPlot } from './dotplot.js';
import { applyDecisions, exportDecisions, importDecisions } from './export.js';
import { assignStar, fmt2 } from './grading.js';
import {
  adjustBoundary,
  resetBoundaries,
  setNote,
  toggleInclusion,
} from './store.js';
import type { BoundaryKey, PoolState } from './types.js';

const $ = <T extends HTMLElement = HTMLElement>(sel: string): T => {
  const el = document.querySelector<T>(sel);
  if (!el) throw new Error(`missing element ${sel}`);
  return el;
};

const BOUNDARY_KEYS: BoundaryKey[] = ['b12', 'b23', 'b34'];
const QUEUE_LENGTH = 10;

let state: PoolState | null = null;

function setState(next: PoolState): void {
  state = next;
  render();
}

// ---------------------------------------------------------------------------
// Error banner

function showBanner(message: string, retryable: boolean): void {
  const banner = $('#banner');
  banner.hidden = false;
  banner.className = retryable ? 'banner retryable' : 'banner';
  $('#banner-message').textContent = message;
  ($('#banner-retry') as HTMLButtonElement).hidden = !retryable;
}

function clearBanner(): void {
  $('#banner').hidden = true;
}

// ---------------------------------------------------------------------------
// Rendering

function renderSummary(s: PoolState): void {
  const included = s.papers.filter((p) => p.included).length;
  $('#pool-title').textContent = `${s.institution} — ${included} of ${s.papers.length} papers in pool`;
  const warning = $('#empty-warning');
  warning.hidden = s.projection !== null || s.papers.length === 0;
  if (!s.projection) {
    $('#profile-bar').innerHTML = '';
    $('#summary-numbers').textContent = '';
    return;
  }
  const { profile, gpa, qrShare } = s.projection;
  const segments: [string, number][] = [
    ['seg4', profile.pct4],
    ['seg3', profile.pct3],
    ['seg2', profile.pct2],
    ['seg1', profile.pct1],
  ];
  $('#profile-bar').innerHTML = segments
    .filter(([, pct]) => pct > 0)
    .map(([cls, pct]) => `<div class="${cls}" style="width:${pct}%"></div>`)
    .join('');
  $('#summary-numbers').innerHTML = [
    `4*: <b>${fmt2(profile.pct4)}%</b>`,
    `3*: <b>${fmt2(profile.pct3)}%</b>`,
    `2*: <b>${fmt2(profile.pct2)}%</b>`,
    `1*: <b>${fmt2(profile.pct1)}%</b>`,
    `GPA: <b>${gpa.toFixed(3)}</b>`,
    `QR share: <b>${fmt2(qrShare)}%</b>`,
  ].join(' &middot; ');
}

function renderSliders(s: PoolState): void {
  for (const key of BOUNDARY_KEYS) {
    const slider = $(`#slider-${key}`) as HTMLInputElement;
    slider.value = String(s.boundaries[key]);
    $(`#value-${key}`).textContent = fmt2(s.boundaries[key]);
  }
}

function renderQueue(s: PoolState): void {
  const byLabel = new Map(s.papers.map((p) => [p.label, p]));
  $('#queue').innerHTML = s.borderline
    .slice(0, QUEUE_LENGTH)
    .map((label) => {
      const paper = byLabel.get(label)!;
      const distance = Math.abs(paper.mean - s.boundaries.b23);
      return (
        `<li data-label="${label}"><span class="queue-label">${label}</span>` +
        `<span class="queue-detail">mean ${fmt2(paper.mean)}, ` +
        `${fmt2(distance)} from b23</span></li>`
      );
    })
    .join('');
}

function renderTable(s: PoolState): void {
  const changed = new Set(s.highlighted);
  const rows = s.papers.map((p) => {
    const grade = assignStar(p.mean, s.boundaries);
    const cls = [
      p.included ? '' : 'excluded',
      changed.has(p.label) ? 'grade-changed' : '',
    ]
      .filter(Boolean)
      .join(' ');
    return (
      `<tr class="${cls}" data-label="${p.label}">` +
      `<td><input type="checkbox" data-action="toggle" ${p.included ? 'checked' : ''}></td>` +
      `<td>${p.label}</td>` +
      `<td class="num">${fmt2(p.mean)}</td>` +
      `<td class="num">${fmt2(p.min)}&ndash;${fmt2(p.max)}</td>` +
      `<td class="num">${fmt2(p.rigour)} / ${fmt2(p.originality)} / ${fmt2(p.significance)}</td>` +
      `<td>${grade}</td>` +
      `<td><input type="text" data-action="note" value="${escapeAttr(p.humanNote)}" ` +
      `placeholder="note"></td></tr>`
    );
  });
  $('#paper-rows').innerHTML = rows.join('');
}

function renderJournal(s: PoolState): void {
  $('#journal').innerHTML = s.journal
    .slice(-8)
    .reverse()
    .map((e) => `<li><time>${e.at.slice(11, 19)}</time> ${e.action}</li>`)
    .join('');
}

const escapeAttr = (text: string): string =>
  text.replace(/&/g, '&amp;').replace(/"/g, '&quot;').replace(/</g, '&lt;');

function render(): void {
  if (!state) return;
  $('#workspace').hidden = false;
  renderSummary(state);
  renderSliders(state);
  renderQueue(state);
  renderTable(state);
  renderJournal(state);
  $('#plot').innerHTML = renderDotPlot(state);
}

// ---------------------------------------------------------------------------
// Control events

async function doLoad(): Promise<void> {
  const base = ($('#service-base') as HTMLInputElement).value.trim().replace(/\/$/, '');
  const label = ($('#institution') as HTMLInputElement).value;
  const button = $('#load') as HTMLButtonElement;
  button.disabled = true;
  try {
    clearBanner();
    setState(await loadInstitution(base, label));
  } catch (err) {
    const retryable = err instanceof ServiceError ? err.retryable : true;
    showBanner(err instanceof Error ? err.message : String(err), retryable);
  } finally {
    button.disabled = false;
  }
}

function onTableChange(event: Event): void {
  if (!state) return;
  const input = event.target as HTMLInputElement;
  const row = input.closest('tr');
  const label = row?.dataset.label;
  if (!label) return;
  if (input.dataset.action === 'toggle') {
    setState(toggleInclusion(state, label));
  } else if (input.dataset.action === 'note') {
    setState(setNote(state, label, input.value));
  }
}

function onSlider(key: BoundaryKey, event: Event): void {
  if (!state) return;
  const value = Number((event.target as HTMLInputElement).value);
  setState(adjustBoundary(state, key, value));
}

function downloadDecisions(): void {
  if (!state) return;
  const blob = new Blob([exportDecisions(state)], { type: 'text/csv' });
  const url = URL.createObjectURL(blob);
  const a = document.createElement('a');
  a.href = url;
  a.download = `${state.institution.replace(/\s+/g, '_')}_decisions.csv`;
  a.click();
  URL.revokeObjectURL(url);
}

async function importFile(event: Event): Promise<void> {
  if (!state) return;
  const input = event.target as HTMLInputElement;
  const file = input.files?.[0];
  if (!file) return;
  try {
    clearBanner();
    setState(applyDecisions(state, importDecisions(await file.text())));
  } catch (err) {
    showBanner(err instanceof Error ? err.message : String(err), false);
  } finally {
    input.value = '';
  }
}

export function initApp(): void {
  $('#load').addEventListener('click', () => void doLoad());
  $('#institution').addEventListener('keydown', (event) => {
    if ((event as KeyboardEvent).key === 'Enter') void doLoad();
  });
  $('#banner-retry').addEventListener('click', () => void doLoad());
  for (const key of BOUNDARY_KEYS) {
    $(`#slider-${key}`).addEventListener('input', (event) => onSlider(key, event));
  }
  $('#reset').addEventListener('click', () => {
    if (state) setState(resetBoundaries(state));
  });
  $('#paper-rows').addEventListener('change', onTableChange);
  $('#export').addEventListener('click', downloadDecisions);
  $('#import-file').addEventListener('change', (event) => void importFile(event));
}

initApp();

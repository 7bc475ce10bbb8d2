// Scenario Studio: single-page planner UI over the cesoforge service.

import { ApiClient, ApiRequestError } from './api.js';
import { EnhanceFlow } from './enhance.js';
import { validateInjectPatch } from './injects.js';
import { fromBundle, ModelError } from './model.js';
import { GraphView } from './graphView.js';
import { IncidentSummary } from './types.js';

const api = new ApiClient('');
const enhanceFlow = new EnhanceFlow(api);

function el<T extends HTMLElement>(id: string): T {
  const found = document.getElementById(id);
  if (!found) throw new Error(`missing element #${id}`);
  return found as T;
}

function notify(message: string, isError = false): void {
  const banner = el<HTMLDivElement>('banner');
  banner.textContent = message;
  banner.className = isError ? 'banner error' : 'banner';
  banner.style.display = message ? 'block' : 'none';
}

async function guarded<T>(work: () => Promise<T>): Promise<T | undefined> {
  try {
    notify('');
    return await work();
  } catch (err) {
    if (err instanceof ApiRequestError) {
      notify(`${err.code}: ${err.message}`, true);
    } else if (err instanceof ModelError) {
      notify(`Malformed bundle: ${err.message}`, true);
    } else {
      notify(String(err), true);
    }
    return undefined;
  }
}

let currentIncident: IncidentSummary | null = null;
let graphView: GraphView;

async function refreshIncidentList(): Promise<void> {
  const incidents = await guarded(() => api.listIncidents());
  const picker = el<HTMLSelectElement>('incident-picker');
  picker.textContent = '';
  for (const incident of incidents ?? []) {
    const option = document.createElement('option');
    option.value = incident.id;
    option.textContent = `${incident.id} (${incident.objects} objects)`;
    picker.appendChild(option);
  }
}

async function showIncident(id: string): Promise<void> {
  const incident = await guarded(() => api.getIncident(id));
  if (!incident) return;
  currentIncident = incident;
  try {
    graphView.render(fromBundle(incident.bundle), incident.bundle);
  } catch (err) {
    graphView.renderError(err instanceof Error ? err.message : String(err));
    return;
  }
  renderInjects(incident);
  const ranking = await guarded(() => enhanceFlow.loadRanking(id));
  renderRanking(ranking ?? []);
}

function renderRanking(entries: { name: string; score: number; techniques: number }[]): void {
  const host = el<HTMLDivElement>('ranking');
  host.textContent = '';
  for (const entry of entries) {
    const row = document.createElement('div');
    row.className = 'rank-row';
    const label = document.createElement('span');
    label.textContent = `${entry.name} — score ${entry.score.toFixed(1)}, ${entry.techniques} techniques`;
    const button = document.createElement('button');
    button.textContent = 'Merge';
    button.addEventListener('click', async () => {
      if (!currentIncident) return;
      const result = await guarded(() =>
        enhanceFlow.apply(currentIncident!.id, entry.name),
      );
      if (result) {
        notify(`Merged ${entry.name}: +${result.delta} objects`);
        await showIncident(result.after.id);
        offerUndoView(result.after.id);
      }
    });
    row.appendChild(label);
    row.appendChild(button);
    host.appendChild(row);
  }
}

function offerUndoView(incidentId: string): void {
  const host = el<HTMLDivElement>('ranking');
  const undo = document.createElement('button');
  undo.textContent = 'Show pre-merge view';
  undo.addEventListener('click', () => {
    const snapshot = enhanceFlow.undoSnapshot(incidentId);
    if (snapshot) {
      graphView.render(fromBundle(snapshot.bundle), snapshot.bundle);
      renderInjects(snapshot);
      notify('Showing the pre-merge snapshot (reload to return to the stored graph).');
    }
  });
  host.prepend(undo);
}

function renderInjects(incident: IncidentSummary): void {
  const host = el<HTMLDivElement>('injects');
  host.textContent = '';
  incident.injects.forEach((inject, index) => {
    const row = document.createElement('div');
    row.className = 'inject-row';

    const title = document.createElement('input');
    title.value = inject.title;
    const difficulty = document.createElement('input');
    difficulty.type = 'number';
    difficulty.min = '1';
    difficulty.max = '5';
    difficulty.value = String(inject.difficulty);
    const timing = document.createElement('span');
    timing.textContent = `${inject.timing_offset} min`;

    const save = document.createElement('button');
    save.textContent = 'Save';
    save.addEventListener('click', async () => {
      const patch = {
        title: title.value,
        difficulty: Number(difficulty.value),
      };
      const problem = validateInjectPatch(patch);
      if (problem) {
        notify(problem, true);
        return;
      }
      const updated = await guarded(() =>
        api.patchInject(incident.id, index, patch),
      );
      if (updated) {
        notify(`Inject ${index + 1} saved.`);
        renderInjects(updated);
      }
    });

    row.appendChild(timing);
    row.appendChild(title);
    row.appendChild(difficulty);
    row.appendChild(save);
    host.appendChild(row);
  });
}

async function draftIncidents(): Promise<void> {
  const sector = el<HTMLInputElement>('draft-sector').value.trim();
  const created = await guarded(() =>
    api.draftIncidents(sector ? { sector } : {}, 2),
  );
  if (created) {
    notify(`Drafted: ${created.incidents.join(', ')}`);
    await refreshIncidentList();
  }
}

async function loadTrends(): Promise<void> {
  const sector = el<HTMLInputElement>('trend-sector').value.trim();
  const trends = await guarded(() => api.trends(sector ? { sector } : {}));
  if (!trends) return;
  const host = el<HTMLPreElement>('trend-output');
  const series = trends.series.map((p) => `${p.month}  ${'#'.repeat(p.count)} ${p.count}`);
  const forecast = trends.forecast.map(
    (p) => `${p.month}  ~${p.value.toFixed(1)} [${p.lo.toFixed(1)}, ${p.hi.toFixed(1)}]`,
  );
  host.textContent = [...series, '--- forecast ---', ...forecast, trends.note].join('\n');
}

function wireUp(): void {
  graphView = new GraphView(
    el('graph-canvas'),
    el('properties'),
    el('graph-status'),
  );
  el<HTMLButtonElement>('btn-extract').addEventListener('click', () =>
    guarded(async () => {
      await api.extract();
      notify('Extraction complete.');
    }),
  );
  el<HTMLButtonElement>('btn-draft').addEventListener('click', draftIncidents);
  el<HTMLButtonElement>('btn-load-incident').addEventListener('click', () => {
    const picker = el<HTMLSelectElement>('incident-picker');
    if (picker.value) void showIncident(picker.value);
  });
  el<HTMLButtonElement>('btn-refresh').addEventListener('click', refreshIncidentList);
  el<HTMLButtonElement>('btn-trends').addEventListener('click', loadTrends);
  void refreshIncidentList();
}

document.addEventListener('DOMContentLoaded', wireUp);

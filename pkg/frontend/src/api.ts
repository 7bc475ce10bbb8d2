// Typed client for the cesoforge service. The fetch implementation is
// injectable so tests can run against a fake service.

import {
  ApiErrorBody,
  BreadcrumbSummary,
  IncidentSummary,
  RankEntry,
  StixBundle,
  TrendResponse,
} from './types.js';

export class ApiRequestError extends Error {
  constructor(
    public readonly status: number,
    public readonly code: string,
    message: string,
  ) {
    super(message);
  }
}

type FetchLike = (input: string, init?: RequestInit) => Promise<Response>;

export class ApiClient {
  constructor(
    private readonly baseUrl: string = '',
    private readonly fetchImpl: FetchLike = (input, init) => fetch(input, init),
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(this.baseUrl + path, init);
    } catch (err) {
      throw new ApiRequestError(0, 'NetworkError', String(err));
    }
    if (!response.ok) {
      let body: ApiErrorBody = { code: `HTTP${response.status}`, message: response.statusText };
      try {
        body = (await response.json()) as ApiErrorBody;
      } catch {
        // non-JSON error body; keep the HTTP fallback
      }
      throw new ApiRequestError(response.status, body.code, body.message);
    }
    return (await response.json()) as T;
  }

  private post<T>(path: string, payload: unknown, method = 'POST'): Promise<T> {
    return this.request<T>(path, {
      method,
      headers: { 'content-type': 'application/json' },
      body: JSON.stringify(payload),
    });
  }

  listArticles(): Promise<{ id: string; name_tag: string; published: string }[]> {
    return this.request('/api/articles');
  }

  extract(): Promise<{ extracted: { article_id: string; maturity: number }[] }> {
    return this.post('/api/extract', {});
  }

  listBreadcrumbs(params: Record<string, string> = {}): Promise<BreadcrumbSummary[]> {
    const query = new URLSearchParams(params).toString();
    return this.request(`/api/breadcrumbs${query ? '?' + query : ''}`);
  }

  listIncidents(): Promise<{ id: string; created: string; objects: number }[]> {
    return this.request('/api/incidents');
  }

  getIncident(id: string): Promise<IncidentSummary> {
    return this.request(`/api/incidents/${encodeURIComponent(id)}`);
  }

  draftIncidents(filter: Record<string, unknown>, k: number): Promise<{ incidents: string[] }> {
    return this.post('/api/incidents', { filter, k, overwrite: true });
  }

  rankApts(incidentId: string): Promise<RankEntry[]> {
    return this.request(`/api/apt/rank?incident=${encodeURIComponent(incidentId)}`);
  }

  enhance(
    incidentId: string,
    group: string,
    phases?: string[],
    fragment?: string[],
  ): Promise<IncidentSummary> {
    return this.post(`/api/incidents/${encodeURIComponent(incidentId)}/enhance`, {
      group,
      phases,
      fragment,
    });
  }

  patchInject(
    incidentId: string,
    index: number,
    patch: Partial<{ title: string; description: string; difficulty: number; timing_offset: number }>,
  ): Promise<IncidentSummary> {
    return this.post(
      `/api/incidents/${encodeURIComponent(incidentId)}/injects/${index}`,
      patch,
      'PATCH',
    );
  }

  createScenario(
    spec: Record<string, unknown>,
    storylineSeed?: string,
  ): Promise<{ id: string; name: string }> {
    const body = storylineSeed ? { ...spec, storyline_seed: storylineSeed } : spec;
    return this.post('/api/scenarios', body);
  }

  scenarioBundle(id: string): Promise<StixBundle> {
    return this.request(`/api/scenarios/${encodeURIComponent(id)}/bundle`);
  }

  scenarioMsel(id: string): Promise<unknown> {
    return this.request(`/api/scenarios/${encodeURIComponent(id)}/msel`);
  }

  trends(params: Record<string, string> = {}): Promise<TrendResponse> {
    const query = new URLSearchParams(params).toString();
    return this.request(`/api/trends${query ? '?' + query : ''}`);
  }
}

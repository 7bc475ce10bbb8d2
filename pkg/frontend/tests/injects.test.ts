import { readFileSync } from 'node:fs';
import { join } from 'node:path';
import { describe, expect, it } from 'vitest';

import { ApiClient, ApiRequestError } from '../src/api';
import { validateInjectPatch } from '../src/injects';
import { IncidentSummary } from '../src/types';

const FIXTURES = join(__dirname, 'fixtures');

function loadIncident(): IncidentSummary {
  return JSON.parse(
    readFileSync(join(FIXTURES, 'incident_pre.json'), 'utf-8'),
  ) as IncidentSummary;
}

describe('client-side validation mirrors the service rules', () => {
  it('accepts difficulties 1..5', () => {
    for (const difficulty of [1, 2, 3, 4, 5]) {
      expect(validateInjectPatch({ difficulty })).toBeNull();
    }
  });

  it('rejects out-of-range and non-integer difficulty', () => {
    expect(validateInjectPatch({ difficulty: 0 })).toMatch(/1 to 5/);
    expect(validateInjectPatch({ difficulty: 9 })).toMatch(/1 to 5/);
    expect(validateInjectPatch({ difficulty: 2.5 })).toMatch(/1 to 5/);
  });

  it('rejects negative timing and blank titles', () => {
    expect(validateInjectPatch({ timing_offset: -5 })).toMatch(/non-negative/);
    expect(validateInjectPatch({ title: '   ' })).toMatch(/empty/);
    expect(validateInjectPatch({ title: 'Renamed', timing_offset: 0 })).toBeNull();
  });
});

/** In-memory stand-in for the service implementing the inject-patch contract:
 * state survives "reloads" (new client instances) because it lives in the
 * fake server, exactly like the real store-backed service. */
class FakeService {
  private incident: IncidentSummary = loadIncident();

  fetch = async (input: string, init?: RequestInit): Promise<Response> => {
    const patchMatch = input.match(/\/api\/incidents\/([^/]+)\/injects\/(\d+)$/);
    if (patchMatch && init?.method === 'PATCH') {
      const index = Number(patchMatch[2]);
      if (index >= this.incident.injects.length) {
        return this.json(404, { code: 'NotFoundError', message: 'no such inject' });
      }
      const patch = JSON.parse(String(init.body)) as Record<string, unknown>;
      const difficulty = patch['difficulty'] as number | undefined;
      if (difficulty !== undefined && (difficulty < 1 || difficulty > 5)) {
        return this.json(400, { code: 'ValidationError', message: 'difficulty out of range' });
      }
      this.incident.injects[index] = { ...this.incident.injects[index], ...patch };
      return this.json(200, this.incident);
    }
    if (input.match(/\/api\/incidents\/[^/]+$/) && (!init || !init.method || init.method === 'GET')) {
      return this.json(200, this.incident);
    }
    return this.json(404, { code: 'NotFoundError', message: `no route ${input}` });
  };

  private json(status: number, body: unknown): Response {
    return new Response(JSON.stringify(body), {
      status,
      headers: { 'content-type': 'application/json' },
    });
  }
}

describe('inject edits persist across reload', () => {
  it('difficulty edit survives a fresh client fetching the incident again', async () => {
    const service = new FakeService();
    const client = new ApiClient('', service.fetch);
    const incident = await client.getIncident('incident-x');
    expect(incident.injects[0].difficulty).not.toBe(5);

    await client.patchInject('incident-x', 0, { difficulty: 5 });

    const reloadedClient = new ApiClient('', service.fetch); // page reload analogue
    const reloaded = await reloadedClient.getIncident('incident-x');
    expect(reloaded.injects[0].difficulty).toBe(5);
  });

  it('surfaces the service 400 for a bad difficulty as a typed error', async () => {
    const client = new ApiClient('', new FakeService().fetch);
    await expect(client.patchInject('incident-x', 0, { difficulty: 9 })).rejects.toMatchObject({
      status: 400,
      code: 'ValidationError',
    });
  });

  it('maps unknown routes to ApiRequestError with the error body shape', async () => {
    const client = new ApiClient('', new FakeService().fetch);
    try {
      await client.scenarioBundle('ghost');
      expect.unreachable('should have thrown');
    } catch (err) {
      expect(err).toBeInstanceOf(ApiRequestError);
      expect((err as ApiRequestError).code).toBe('NotFoundError');
    }
  });
});

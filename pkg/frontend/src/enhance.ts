// Enhance flow: ranked APT list -> pick group (and optional phases) ->
// POST enhance -> re-render; undo restores the pre-merge snapshot.

import { ApiClient } from './api.js';
import { expectedMergeDelta, MergeDelta } from './merge.js';
import { IncidentSummary, RankEntry, StixBundle } from './types.js';

export interface EnhanceResult {
  before: IncidentSummary;
  after: IncidentSummary;
  delta: number;
}

export class EnhanceFlow {
  private snapshots = new Map<string, IncidentSummary>();

  constructor(private readonly api: ApiClient) {}

  loadRanking(incidentId: string): Promise<RankEntry[]> {
    return this.api.rankApts(incidentId);
  }

  predictedDelta(before: StixBundle, donor: StixBundle): MergeDelta {
    return expectedMergeDelta(before, donor);
  }

  async apply(incidentId: string, group: string, phases?: string[]): Promise<EnhanceResult> {
    const before = await this.api.getIncident(incidentId);
    this.snapshots.set(incidentId, before);
    const after = await this.api.enhance(incidentId, group, phases);
    return { before, after, delta: after.objects - before.objects };
  }

  /** Pre-merge snapshot for client-side undo rendering, if one exists. */
  undoSnapshot(incidentId: string): IncidentSummary | undefined {
    return this.snapshots.get(incidentId);
  }
}

// Graph view model: a pure projection of a served STIX bundle. The client
// never invents objects; everything rendered traces to a bundle record.

import { CESO_EXTENSION_KEY, StixBundle } from './types.js';

export interface GraphNode {
  id: string;
  kind: string;
  label: string;
}

export interface GraphEdge {
  id: string;
  source: string;
  target: string;
  relType: string;
  nonstandard: boolean;
}

export interface GraphViewModel {
  nodes: GraphNode[];
  edges: GraphEdge[];
  selection: string | null;
}

export class ModelError extends Error {}

function isBundle(doc: unknown): doc is StixBundle {
  const candidate = doc as StixBundle;
  return (
    !!candidate &&
    candidate.type === 'bundle' &&
    Array.isArray(candidate.objects)
  );
}

export function fromBundle(doc: unknown): GraphViewModel {
  if (!isBundle(doc)) {
    throw new ModelError('not a STIX bundle');
  }
  const nodes: GraphNode[] = [];
  const edges: GraphEdge[] = [];
  const nodeIds = new Set<string>();
  for (const obj of doc.objects) {
    if (!obj || typeof obj.id !== 'string' || typeof obj.type !== 'string') {
      throw new ModelError('bundle object without id/type');
    }
    if (obj.type === 'relationship') {
      continue;
    }
    nodes.push({
      id: obj.id,
      kind: obj.type,
      label: `${obj.type}: ${obj.name ?? obj.id}`,
    });
    nodeIds.add(obj.id);
  }
  for (const obj of doc.objects) {
    if (obj.type !== 'relationship') {
      continue;
    }
    if (!obj.source_ref || !obj.target_ref || !obj.relationship_type) {
      throw new ModelError(`malformed relationship ${obj.id}`);
    }
    if (!nodeIds.has(obj.source_ref) || !nodeIds.has(obj.target_ref)) {
      throw new ModelError(`dangling relationship endpoint in ${obj.id}`);
    }
    const ceso = obj.extensions?.[CESO_EXTENSION_KEY] ?? {};
    edges.push({
      id: obj.id,
      source: obj.source_ref,
      target: obj.target_ref,
      relType: obj.relationship_type,
      nonstandard: Boolean(ceso['nonstandard']),
    });
  }
  return { nodes, edges, selection: null };
}

export function nodeCount(vm: GraphViewModel): number {
  return vm.nodes.length;
}

export function edgeCount(vm: GraphViewModel): number {
  return vm.edges.length;
}

export function select(vm: GraphViewModel, id: string | null): GraphViewModel {
  if (id !== null && !vm.nodes.some((n) => n.id === id)) {
    return vm;
  }
  return { ...vm, selection: id };
}

const HIDDEN_PROPERTIES = new Set(['type', 'id', 'spec_version']);

export function propertiesOf(doc: StixBundle, id: string): [string, string][] {
  const obj = doc.objects.find((o) => o.id === id);
  if (!obj) {
    return [];
  }
  return Object.entries(obj)
    .filter(([key]) => !HIDDEN_PROPERTIES.has(key))
    .map(([key, value]): [string, string] => [
      key,
      typeof value === 'string' ? value : JSON.stringify(value),
    ])
    .sort((a, b) => a[0].localeCompare(b[0]));
}

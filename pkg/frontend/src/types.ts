// Wire types mirroring the cesoforge service JSON.

export interface StixObject {
  type: string;
  id: string;
  name?: string;
  description?: string;
  created?: string;
  modified?: string;
  relationship_type?: string;
  source_ref?: string;
  target_ref?: string;
  extensions?: Record<string, Record<string, unknown>>;
  [key: string]: unknown;
}

export interface StixBundle {
  type: 'bundle';
  id: string;
  objects: StixObject[];
}

export interface ApiErrorBody {
  code: string;
  message: string;
}

export interface InjectInfo {
  title: string;
  description: string;
  timing_offset: number;
  difficulty: number;
  carrier_objects: string[];
}

export interface IncidentSummary {
  id: string;
  name_tag: string;
  created: string;
  provenance: string[];
  objects: number;
  relationships: number;
  injects: InjectInfo[];
  bundle: StixBundle;
}

export interface RankEntry {
  group_id: string;
  name: string;
  aliases: string[];
  score: number;
  techniques: number;
  objects: number;
}

export interface BreadcrumbSummary {
  article_id: string;
  maturity: number;
  topics: string[];
  tags: { category: string; text: string; start: number; end: number; tagger: string }[];
  fragment_objects: number;
}

export interface TrendResponse {
  series: { month: string; count: number }[];
  forecast: { month: string; value: number; lo: number; hi: number }[];
  note: string;
  markdown: string;
}

export const CESO_EXTENSION_KEY = 'extension-definition--ceso';

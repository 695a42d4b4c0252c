// Payload shapes of the service's JSON responses, mirrored one-to-one.

export interface StatsPayload {
  nodes: number;
  edges: number;
  nodes_by_type: Record<string, number>;
  edges_by_relation: Record<string, number>;
  schema: string[];
  relations: string[];
}

export interface NodePayload {
  id: string;
  type: string;
  attrs: Record<string, string>;
  canonical: string | null;
}

export interface NeighborEntry {
  relation: string;
  direction: "out" | "in";
  node_id: string;
  title: string;
}

export interface NeighborsPayload {
  node_id: string;
  total: number;
  limit: number;
  offset: number;
  neighbors: NeighborEntry[];
}

export interface SearchMatch {
  id: string;
  type: string;
  title: string;
}

export interface SearchPayload {
  title: string;
  matches: SearchMatch[];
}

export interface StructuredQueryBody {
  object_title: string;
  relationship?: string;
  target_attribute?: string;
}

export interface StructuredResultPayload {
  kind: string;
  values: string[];
  provenance: [string, string][];
}

export interface AnswerPayload {
  question: string;
  entities: string[];
  anchor: string | null;
  context: string;
  answer: string;
  timings: Record<string, number>;
}

export interface ErrorBody {
  error: { code: string; message: string };
}

// One exchange in a console session. `provenance` holds every node id the
// service attributed the answer to; cards render chips from it.
export interface SessionEntry {
  question: string;
  answer: string;
  provenance: string[];
  timestamp: number;
}

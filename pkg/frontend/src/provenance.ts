// Provenance view model: chronological timeline, lineage panel, and
// navigable collection members, assembled purely from gateway reads.

import type { EventSummary, Gateway, ItemSummary } from "./api.js";

export interface TimelineRow {
  id: number;
  timestampIso: string;
  agent: string;
  activityPath: string;
  transition: string;
  schema: string | null;
  schemaName: string | null;
  hasOutcome: boolean;
  // set when this event moved a viewpoint; such outcomes are addressable
  viewpointWritten: string | null;
}

export interface LineagePanel {
  description: string | null;
  version: string | null;
  bootstrapRoot: boolean;
}

export interface CollectionMember {
  collection: string;
  slot: number;
  target: string | null;
}

export interface ProvenanceView {
  item: string;
  name: string;
  timeline: TimelineRow[];
  lineage: LineagePanel;
  members: CollectionMember[];
  workflowStates: { path: string; state: string; active: boolean }[];
}

export function timelineFromEvents(events: EventSummary[]): TimelineRow[] {
  return events.map((e) => ({
    id: e.id,
    timestampIso: new Date(e.timestamp_ms).toISOString(),
    agent: e.agent,
    activityPath: e.activity_path,
    transition: e.transition,
    schema: e.schema ? `${e.schema[0]} v${e.schema[1]}` : null,
    schemaName: e.schema ? e.schema[0] : null,
    hasOutcome: e.has_outcome,
    viewpointWritten: e.viewpoint_written,
  }));
}

export function lineageFromSummary(summary: ItemSummary): LineagePanel {
  const props = new Map(summary.properties.map((p) => [p.name, p.value]));
  const version = props.get("DescriptionVersion") ?? null;
  return {
    description: props.get("DescriptionRef") ?? null,
    version,
    bootstrapRoot: version === "0",
  };
}

export function membersFromSummary(summary: ItemSummary): CollectionMember[] {
  const members: CollectionMember[] = [];
  for (const collection of summary.collections) {
    for (const slot of collection.slots) {
      members.push({ collection: collection.name, slot: slot.id,
                     target: slot.target });
    }
  }
  return members;
}

export async function loadProvenance(gateway: Gateway,
                                     item: string): Promise<ProvenanceView> {
  const summary = await gateway.itemSummary(item);
  const events = await gateway.fullHistory(item);
  const props = new Map(summary.properties.map((p) => [p.name, p.value]));
  const workflowStates = summary.workflow
    ? Object.entries(summary.workflow.activities)
        .map(([path, s]) => ({ path, state: s.state, active: s.active }))
        .sort((a, b) => a.path.localeCompare(b.path))
    : [];
  return {
    item,
    name: props.get("Name") ?? item,
    timeline: timelineFromEvents(events),
    lineage: lineageFromSummary(summary),
    members: membersFromSummary(summary),
    workflowStates,
  };
}

// Job inbox: polls the gateway for every role the agent holds and keeps a
// deduplicated, enriched entry list. Stateless beyond the last poll result;
// all consistency comes from server event ids.

import type { Gateway, Job } from "./api.js";
import { GatewayError } from "./api.js";

export interface InboxEntry {
  job: Job;
  itemName: string;
  descriptionType: string;
  key: string;
}

export class Inbox {
  gateway: Gateway;
  pollIntervalMs: number;
  entries: InboxEntry[] = [];
  onChange: ((entries: InboxEntry[]) => void) | null = null;
  private timer: ReturnType<typeof setTimeout> | null = null;
  private summaryCache = new Map<string, { name: string; descType: string }>();

  constructor(gateway: Gateway, pollIntervalMs = 2000) {
    this.gateway = gateway;
    this.pollIntervalMs = pollIntervalMs;
  }

  async refresh(): Promise<InboxEntry[]> {
    const roles = this.gateway.agent?.roles ?? [];
    const jobs: Job[] = [];
    const seen = new Set<string>();
    for (const role of roles) {
      for (const job of await this.gateway.pollJobs(role, 0)) {
        const key = `${job.item}|${job.activity_path}|${job.transition}`;
        if (!seen.has(key)) {
          seen.add(key);
          jobs.push(job);
        }
      }
    }
    const entries: InboxEntry[] = [];
    for (const job of jobs) {
      const meta = await this.describe(job.item);
      entries.push({
        job,
        itemName: meta.name,
        descriptionType: meta.descType,
        key: `${job.item}|${job.activity_path}|${job.transition}`,
      });
    }
    entries.sort((a, b) => a.key.localeCompare(b.key));
    this.entries = entries;
    this.onChange?.(entries);
    return entries;
  }

  private async describe(item: string): Promise<{ name: string; descType: string }> {
    const cached = this.summaryCache.get(item);
    if (cached) return cached;
    let meta = { name: item.slice(0, 8), descType: "?" };
    try {
      const summary = await this.gateway.itemSummary(item);
      const props = new Map(summary.properties.map((p) => [p.name, p.value]));
      meta = {
        name: props.get("Name") ?? item.slice(0, 8),
        descType: props.get("DescKind") ?? props.get("DescriptionRef") ?? "item",
      };
    } catch (error) {
      if (!(error instanceof GatewayError)) throw error;
    }
    this.summaryCache.set(item, meta);
    return meta;
  }

  start(): void {
    this.stop();
    const tick = async () => {
      try {
        await this.refresh();
      } catch (error) {
        if (error instanceof GatewayError && error.unauthenticated) {
          this.stop();
          return;
        }
      }
      this.timer = setTimeout(tick, this.pollIntervalMs);
    };
    this.timer = setTimeout(tick, 0);
  }

  stop(): void {
    if (this.timer !== null) {
      clearTimeout(this.timer);
      this.timer = null;
    }
  }
}

// Console application: login screen, job inbox, schema-generated forms,
// provenance viewer. Served by the gateway as static assets; all state
// lives on the server.

import { Gateway, GatewayError } from "./api.js";
import { el, refreshFormErrors, renderForm, renderInbox, renderOutcomeXml,
         renderProvenance } from "./dom.js";
import { Inbox, type InboxEntry } from "./inbox.js";
import { loadProvenance } from "./provenance.js";
import { applyServerViolations, buildFormState, toOutcomeXml,
         validateForm } from "./schemaForm.js";

interface ActivitySchema {
  schema: string;
  version: number;
}

export class ConsoleApp {
  gateway: Gateway;
  root: HTMLElement;
  inbox: Inbox;
  status: HTMLElement;

  constructor(root: HTMLElement, baseUrl = "") {
    this.root = root;
    this.gateway = new Gateway(baseUrl);
    this.gateway.onUnauthorized = () => this.showLogin("session expired");
    this.inbox = new Inbox(this.gateway);
    this.status = el("div", { class: "status", "data-status": "1" });
  }

  mount(): void {
    this.showLogin();
  }

  setStatus(text: string): void {
    this.status.textContent = text;
  }

  showLogin(notice = ""): void {
    this.inbox.stop();
    this.root.replaceChildren();
    const name = el("input", { type: "text", "data-login": "name" });
    const password = el("input", { type: "password", "data-login": "password" });
    const error = el("div", { class: "login-error", "data-login-error": "1" }, notice);
    const button = el("button", { type: "button", "data-login": "submit" }, "Log in");
    button.addEventListener("click", async () => {
      try {
        await this.gateway.login((name as HTMLInputElement).value,
                                 (password as HTMLInputElement).value);
        this.showWorkspace();
      } catch (err) {
        error.textContent = err instanceof GatewayError
          ? "invalid credentials" : String(err);
      }
    });
    this.root.append(
      el("div", { class: "login" },
         el("h1", {}, "itemforge console"), name, password, button, error));
  }

  showWorkspace(): void {
    this.root.replaceChildren();
    const inboxPane = el("div", { class: "pane", "data-pane": "inbox" });
    const workPane = el("div", { class: "pane", "data-pane": "work" });
    this.root.append(
      el("div", { class: "workspace" },
         el("h1", {}, `jobs for ${this.gateway.agent?.name ?? "?"}`),
         this.status, inboxPane, workPane));
    this.inbox.onChange = (entries) => {
      inboxPane.replaceChildren(renderInbox(entries, (entry) => {
        void this.openJob(entry, workPane);
      }));
    };
    this.inbox.start();
  }

  async openJob(entry: InboxEntry, pane: HTMLElement): Promise<void> {
    // a Complete job on a data-collecting activity opens its form; every
    // other job executes with one click
    const pinned = entry.job.schema;
    if (entry.job.transition === "Complete" && pinned) {
      await this.openForm(entry, { schema: pinned[0], version: pinned[1] }, pane);
      return;
    }
    try {
      await this.gateway.execute(entry.job.item, entry.job.activity_path,
                                 entry.job.transition);
      this.setStatus(`${entry.job.transition} ${entry.job.activity_path} done`);
    } catch (error) {
      if (error instanceof GatewayError && error.jobGone) {
        this.setStatus("job no longer available");
      } else {
        this.setStatus(String(error));
        return;
      }
    }
    await this.inbox.refresh();
    await this.showProvenance(entry.job.item, pane);
  }

  async openForm(entry: InboxEntry, activity: ActivitySchema,
                 pane: HTMLElement): Promise<void> {
    const model = await this.gateway.formModel(activity.schema, activity.version);
    const form = buildFormState(activity.schema, activity.version, model.fields);
    const container = renderForm(form, async () => {
      if (!validateForm(form)) {
        refreshFormErrors(container, form);
        return; // client-side rejection: no request is sent
      }
      const outcome = toOutcomeXml(form);
      try {
        await this.gateway.execute(entry.job.item, entry.job.activity_path,
                                   entry.job.transition, outcome);
        this.setStatus(`completed ${entry.job.activity_path}`);
        await this.inbox.refresh();
        await this.showProvenance(entry.job.item, pane);
      } catch (error) {
        if (error instanceof GatewayError && error.jobGone) {
          this.setStatus("job no longer available");
          return;
        }
        if (error instanceof GatewayError && error.violations.length > 0) {
          const unmatched = applyServerViolations(form, error.violations);
          refreshFormErrors(container, form, unmatched);
          return;
        }
        throw error;
      }
    });
    pane.replaceChildren(
      el("h2", {}, `${entry.itemName}: ${entry.job.activity_path}`), container);
  }

  async showProvenance(item: string, pane: HTMLElement): Promise<void> {
    const view = await loadProvenance(this.gateway, item);
    const panel = renderProvenance(
      view,
      async (eventId) => {
        const event = view.timeline.find((r) => r.id === eventId);
        if (!event?.schemaName || !event.viewpointWritten) return;
        const text = await this.gateway.viewpointDocument(
          item, event.schemaName, event.viewpointWritten);
        panel.append(renderOutcomeXml(text));
      },
      (target) => void this.showProvenance(target, pane),
    );
    pane.replaceChildren(panel);
  }
}

export function start(): void {
  const root = document.getElementById("app");
  if (root) new ConsoleApp(root).mount();
}

declare global {
  interface Window {
    itemforgeConsole?: ConsoleApp;
  }
}

if (typeof document !== "undefined" && document.getElementById("app")) {
  start();
}

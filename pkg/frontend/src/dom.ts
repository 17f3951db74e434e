// DOM rendering for the three console surfaces. Pure functions from state
// to elements; handlers are injected so tests can drive them directly.

import type { InboxEntry } from "./inbox.js";
import type { ProvenanceView } from "./provenance.js";
import type { FieldState, FormState } from "./schemaForm.js";
import { validateField } from "./schemaForm.js";

export function el<K extends keyof HTMLElementTagNameMap>(
  tag: K, attrs: Record<string, string> = {}, ...children: (Node | string)[]
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [key, value] of Object.entries(attrs)) {
    node.setAttribute(key, value);
  }
  for (const child of children) {
    node.append(child);
  }
  return node;
}

// numeric fields stay type=text with a constrained inputmode: type=number
// would silently blank invalid input before validation could flag it
const INPUT_TYPES: Record<string, string> = {
  integer: "text",
  decimal: "text",
  date: "date",
  datetime: "datetime-local",
  text: "text",
};

const INPUT_MODES: Record<string, string> = {
  integer: "numeric",
  decimal: "decimal",
};

function fieldInput(field: FieldState, onInput: () => void): HTMLElement {
  const spec = field.spec;
  if (spec.input === "select") {
    const select = el("select", { "data-path": spec.path });
    select.append(el("option", { value: "" }, "(choose)"));
    for (const option of spec.options ?? []) {
      select.append(el("option", { value: option }, option));
    }
    select.value = field.value;
    select.addEventListener("change", () => {
      field.value = select.value;
      onInput();
    });
    return select;
  }
  if (spec.input === "boolean") {
    const box = el("input", { type: "checkbox", "data-path": spec.path });
    (box as HTMLInputElement).checked = field.value === "true";
    box.addEventListener("change", () => {
      field.value = (box as HTMLInputElement).checked ? "true" : "false";
      onInput();
    });
    return box;
  }
  const input = el("input", {
    type: INPUT_TYPES[spec.input ?? "text"] ?? "text",
    "data-path": spec.path,
    value: field.value,
  });
  const mode = INPUT_MODES[spec.input ?? ""];
  if (mode) input.setAttribute("inputmode", mode);
  input.addEventListener("input", () => {
    field.value = (input as HTMLInputElement).value;
    onInput();
  });
  return input;
}

export function renderForm(form: FormState, onSubmit: () => void,
                           onCancel?: () => void): HTMLElement {
  const container = el("form", { class: "outcome-form", "data-schema": form.schema });
  container.addEventListener("submit", (event) => event.preventDefault());
  for (const field of form.fields) {
    const row = el("div", { class: "field-row", "data-field": field.spec.path });
    const label = el("label", {}, field.spec.label + (field.spec.required ? " *" : ""));
    const errorBox = el("span", { class: "field-error", "data-error-for": field.spec.path });
    if (field.error) errorBox.textContent = field.error;
    const input = fieldInput(field, () => {
      field.error = validateField(field);
      errorBox.textContent = field.error ?? "";
    });
    row.append(label, input, errorBox);
    container.append(row);
  }
  const formError = el("div", { class: "form-error", "data-form-error": "1" });
  const submit = el("button", { type: "submit", class: "submit" }, "Submit");
  submit.addEventListener("click", onSubmit);
  container.append(formError, submit);
  if (onCancel) {
    const cancel = el("button", { type: "button", class: "cancel" }, "Cancel");
    cancel.addEventListener("click", onCancel);
    container.append(cancel);
  }
  return container;
}

export function refreshFormErrors(container: HTMLElement, form: FormState,
                                  unmatched: string[] = []): void {
  for (const field of form.fields) {
    const box = container.querySelector(`[data-error-for="${field.spec.path}"]`);
    if (box) box.textContent = field.error ?? "";
  }
  const formError = container.querySelector("[data-form-error]");
  if (formError) formError.textContent = unmatched.join("; ");
}

export function renderInbox(entries: InboxEntry[],
                            onSelect: (entry: InboxEntry) => void): HTMLElement {
  const list = el("ul", { class: "inbox" });
  for (const entry of entries) {
    const button = el("button", { type: "button", "data-job": entry.key },
                      `${entry.itemName}: ${entry.job.transition} `
                      + entry.job.activity_path);
    button.addEventListener("click", () => onSelect(entry));
    list.append(el("li", {}, button));
  }
  if (entries.length === 0) {
    list.append(el("li", { class: "empty" }, "no jobs"));
  }
  return list;
}

export function renderProvenance(view: ProvenanceView,
                                 onShowOutcome: (eventId: number) => void,
                                 onNavigate: (item: string) => void): HTMLElement {
  const panel = el("div", { class: "provenance", "data-item": view.item });
  panel.append(el("h2", {}, `History of ${view.name}`));

  const lineage = el("div", { class: "lineage" });
  if (view.lineage.bootstrapRoot) {
    lineage.append("bootstrap root (no lineage)");
  } else if (view.lineage.description) {
    const link = el("a", { href: "#", "data-lineage": view.lineage.description },
                    `description ${view.lineage.description} v${view.lineage.version}`);
    link.addEventListener("click", (event) => {
      event.preventDefault();
      onNavigate(view.lineage.description!);
    });
    lineage.append(link);
  }
  panel.append(lineage);

  const table = el("table", { class: "timeline" });
  for (const row of view.timeline) {
    const tr = el("tr", { "data-event": String(row.id) },
                  el("td", {}, String(row.id)),
                  el("td", {}, row.timestampIso),
                  el("td", {}, row.transition),
                  el("td", {}, row.activityPath),
                  el("td", {}, row.schema ?? ""));
    const actions = el("td", {});
    if (row.hasOutcome && row.viewpointWritten) {
      const show = el("button", { type: "button", "data-outcome": String(row.id) },
                      "outcome");
      show.addEventListener("click", () => onShowOutcome(row.id));
      actions.append(show);
    }
    tr.append(actions);
    table.append(tr);
  }
  panel.append(table);

  const members = el("ul", { class: "members" });
  for (const member of view.members) {
    const li = el("li", {}, `${member.collection}[${member.slot}] `);
    if (member.target) {
      const link = el("a", { href: "#", "data-member": member.target }, member.target);
      link.addEventListener("click", (event) => {
        event.preventDefault();
        onNavigate(member.target!);
      });
      li.append(link);
    } else {
      li.append("(empty)");
    }
    members.append(li);
  }
  panel.append(members);
  return panel;
}

export function renderOutcomeXml(document_: string): HTMLElement {
  const pre = el("pre", { class: "outcome-xml" });
  pre.textContent = document_;
  return pre;
}

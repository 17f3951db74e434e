// Schema-generated data entry: client-side validation state mirrors the
// server's field constraints. The client is never laxer than the schema,
// but the server stays authoritative: anything it rejects is rendered
// against the offending fields.

import type { FormFieldSpec, Violation } from "./api.js";

// lexical rules identical to the kernel's write gate
const INTEGER_RE = /^[+-]?[0-9]+$/;
const DECIMAL_RE = /^[+-]?([0-9]+(\.[0-9]*)?|\.[0-9]+)$/;
const DATE_RE = /^\d{4}-\d{2}-\d{2}$/;
const DATETIME_RE = /^\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}(\.\d+)?(Z|[+-]\d{2}:\d{2})?$/;

export function checkLexical(input: string, raw: string): string | null {
  const value = raw.trim();
  switch (input) {
    case "integer":
      return INTEGER_RE.test(value) ? null : "must be a whole number";
    case "decimal":
      return DECIMAL_RE.test(value) ? null : "must be a decimal number";
    case "boolean":
      return ["true", "false", "1", "0"].includes(value)
        ? null : "must be true or false";
    case "date": {
      if (!DATE_RE.test(value)) return "must be a date (YYYY-MM-DD)";
      const [y, m, d] = value.split("-").map(Number);
      const probe = new Date(Date.UTC(y!, m! - 1, d!));
      return probe.getUTCMonth() === m! - 1 && probe.getUTCDate() === d
        ? null : "not a real calendar date";
    }
    case "datetime":
      return DATETIME_RE.test(value) ? null : "must be a dateTime (ISO 8601)";
    default:
      return null;
  }
}

export interface FieldState {
  spec: FormFieldSpec;
  value: string;
  error: string | null;
}

export interface FormState {
  schema: string;
  version: number;
  fields: FieldState[];
}

export function flattenFields(specs: FormFieldSpec[]): FormFieldSpec[] {
  const out: FormFieldSpec[] = [];
  for (const spec of specs) {
    if (spec.kind === "group") {
      out.push(...flattenFields(spec.fields ?? []));
    } else {
      out.push(spec);
    }
  }
  return out;
}

export function buildFormState(schema: string, version: number,
                               specs: FormFieldSpec[]): FormState {
  return {
    schema,
    version,
    fields: flattenFields(specs).map((spec) => ({
      spec,
      value: spec.default ?? "",
      error: null,
    })),
  };
}

export function validateField(state: FieldState): string | null {
  const spec = state.spec;
  const raw = state.value;
  if (raw.trim() === "") {
    return spec.required ? "required" : null;
  }
  if (spec.options && !spec.options.includes(raw.trim())) {
    return `must be one of: ${spec.options.join(", ")}`;
  }
  const lexical = checkLexical(spec.input ?? "text", raw);
  if (lexical) return lexical;
  if (spec.pattern) {
    const anchored = new RegExp(`^(?:${spec.pattern})$`);
    if (!anchored.test(raw.trim())) return `must match ${spec.pattern}`;
  }
  return null;
}

export function validateForm(form: FormState): boolean {
  let ok = true;
  for (const field of form.fields) {
    field.error = validateField(field);
    if (field.error) ok = false;
  }
  return ok;
}

export function applyServerViolations(form: FormState,
                                      violations: Violation[]): string[] {
  // returns messages that could not be matched to a field
  const unmatched: string[] = [];
  for (const violation of violations) {
    const field = form.fields.find((f) => violationTargets(violation.path, f.spec.path));
    const message = `${violation.rule}: ${violation.message}`;
    if (field) {
      field.error = field.error ? `${field.error}; ${message}` : message;
    } else {
      unmatched.push(`${violation.path}: ${message}`);
    }
  }
  return unmatched;
}

function violationTargets(violationPath: string, fieldPath: string): boolean {
  // server paths may carry positional predicates: /Measurement/weight[2]
  const stripped = violationPath.replace(/\[\d+\]/g, "");
  return stripped === fieldPath;
}

interface XmlNode {
  attrs: Map<string, string>;
  children: Map<string, XmlNode[]>;
  text: string | null;
}

function node(): XmlNode {
  return { attrs: new Map(), children: new Map(), text: null };
}

export function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

// Assemble the outcome document from filled fields. Empty optional fields
// are omitted so minOccurs=0 elements do not appear at all.
export function toOutcomeXml(form: FormState): string {
  const rootName = form.fields[0]?.spec.path.split("/")[1];
  if (!rootName) throw new Error("form has no fields");
  const root = node();
  for (const field of form.fields) {
    const raw = field.value;
    if (raw.trim() === "" && !field.spec.required) continue;
    const segments = field.spec.path.split("/").filter((s) => s.length > 0);
    let current = root;
    for (let i = 1; i < segments.length; i++) {
      const segment = segments[i]!;
      if (segment.startsWith("@")) {
        current.attrs.set(segment.slice(1), raw);
        break;
      }
      let bucket = current.children.get(segment);
      if (!bucket) {
        bucket = [];
        current.children.set(segment, bucket);
      }
      if (bucket.length === 0) bucket.push(node());
      current = bucket[0]!;
      if (i === segments.length - 1) current.text = raw;
    }
  }
  return renderNode(rootName, root);
}

function renderNode(name: string, n: XmlNode): string {
  const attrs = [...n.attrs.entries()]
    .map(([k, v]) => ` ${k}="${escapeXml(v)}"`)
    .join("");
  const inner: string[] = [];
  for (const [childName, bucket] of n.children.entries()) {
    for (const child of bucket) inner.push(renderNode(childName, child));
  }
  if (n.text !== null) inner.push(escapeXml(n.text));
  if (inner.length === 0) return `<${name}${attrs}/>`;
  return `<${name}${attrs}>${inner.join("")}</${name}>`;
}

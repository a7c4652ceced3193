// Verdict entry form. Validation runs entirely client-side before any
// request leaves the browser: an invalid correction renders an inline
// error and submits nothing.

import { FieldPatch, VerdictBody } from "./api";

const VECTOR_FIELDS = new Set(["state", "next_state"]);
const FIELD_CHOICES = ["", "reward", "action", "behavior_prob", "state", "next_state"];

export interface VerdictFormOptions {
  version: number;
  unitId: string;
  disabled?: boolean;
  onSubmit: (body: VerdictBody) => void;
}

interface PatchRowRefs {
  field: HTMLSelectElement;
  index: HTMLInputElement;
  value: HTMLInputElement;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function patchRow(container: HTMLElement, rows: PatchRowRefs[]): void {
  const row = el("div", "patch-row");
  const field = el("select", "patch-field");
  for (const name of FIELD_CHOICES) {
    const opt = el("option", undefined, name === "" ? "choose field" : name);
    opt.value = name;
    field.appendChild(opt);
  }
  const index = el("input", "patch-index");
  index.type = "number";
  index.min = "0";
  index.placeholder = "index";
  index.disabled = true;
  const value = el("input", "patch-value");
  value.type = "text";
  value.placeholder = "corrected value";
  field.addEventListener("change", () => {
    index.disabled = !VECTOR_FIELDS.has(field.value);
    if (index.disabled) index.value = "";
  });
  row.append(field, index, value);
  container.appendChild(row);
  rows.push({ field, index, value });
}

function collectPatches(rows: PatchRowRefs[]): { patches?: FieldPatch[]; errors: string[] } {
  const errors: string[] = [];
  const patches: FieldPatch[] = [];
  rows.forEach((row, i) => {
    const label = `correction ${i + 1}`;
    if (row.field.value === "") {
      errors.push(`${label}: choose a field`);
      return;
    }
    const parsed = Number(row.value.value);
    if (row.value.value.trim() === "" || !Number.isFinite(parsed)) {
      errors.push(`${label}: value must be a number`);
      return;
    }
    const patch: FieldPatch = { field: row.field.value as FieldPatch["field"], value: parsed };
    if (VECTOR_FIELDS.has(row.field.value)) {
      const idx = Number(row.index.value);
      if (row.index.value.trim() === "" || !Number.isInteger(idx) || idx < 0) {
        errors.push(`${label}: ${row.field.value} needs a component index`);
        return;
      }
      patch.index = idx;
    }
    patches.push(patch);
  });
  return errors.length ? { errors } : { patches, errors };
}

export function renderVerdictForm(container: HTMLElement, options: VerdictFormOptions): void {
  container.textContent = "";
  const form = el("form", "verdict-form");
  form.addEventListener("submit", (event) => event.preventDefault());

  const decision = el("select", "decision");
  for (const choice of ["representative", "artefact_remove", "artefact_correct"]) {
    const opt = el("option", undefined, choice);
    opt.value = choice;
    decision.appendChild(opt);
  }

  const patchesBox = el("div", "patches hidden");
  const rows: PatchRowRefs[] = [];
  patchRow(patchesBox, rows);
  const addPatch = el("button", "add-patch", "add correction");
  addPatch.type = "button";
  addPatch.addEventListener("click", () => patchRow(patchesBox, rows));
  patchesBox.appendChild(addPatch);

  decision.addEventListener("change", () => {
    patchesBox.classList.toggle("hidden", decision.value !== "artefact_correct");
  });

  const note = el("textarea", "note");
  note.placeholder = "note (optional)";
  const error = el("div", "form-error");
  error.setAttribute("role", "alert");
  const submit = el("button", "submit-verdict", "submit verdict");
  submit.type = "submit";
  if (options.disabled) submit.disabled = true;

  form.addEventListener("submit", () => {
    error.textContent = "";
    const body: VerdictBody = {
      version: options.version,
      unit_id: options.unitId,
      decision: decision.value as VerdictBody["decision"],
    };
    if (note.value.trim() !== "") body.note = note.value.trim();
    if (decision.value === "artefact_correct") {
      const { patches, errors } = collectPatches(rows);
      if (errors.length) {
        error.textContent = errors.join("; ");
        return; // invalid: nothing is sent
      }
      body.correction = patches;
    }
    options.onSubmit(body);
  });

  form.append(
    el("label", "form-label", "decision"),
    decision,
    patchesBox,
    note,
    error,
    submit,
  );
  container.appendChild(form);
}

// Surfaced for server-side rejections (a 422 on submit): the message
// lands in the same inline slot the client validation uses.
export function showFormError(container: HTMLElement, message: string): void {
  const slot = container.querySelector<HTMLElement>(".form-error");
  if (slot) slot.textContent = message;
}

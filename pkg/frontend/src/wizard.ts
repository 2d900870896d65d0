// Experiment creation wizard: form state, validation, and the DOM form.
//
// Validation here is a courtesy mirror of the service's own checks so
// the operator hears about a problem before the round trip; the service
// remains the authority and re-validates everything. The one rule the
// wizard enforces as a hard gate is the platform's: an experiment is
// not submittable without a hypothesis and a primary metric, because
// without them it could never start.

export interface WizardState {
  experiment_key: string;
  tracking_method: string;
  variant_weights: string;
  exposure_buckets: string;
  team: string;
  product_area: string;
  description: string;
  hypothesis: string;
  primary_metric: string;
  expected_direction: string;
  secondary_metrics: string;
}

export function emptyWizardState(): WizardState {
  return {
    experiment_key: "",
    tracking_method: "cookie",
    variant_weights: "1, 1",
    exposure_buckets: "1000",
    team: "",
    product_area: "",
    description: "",
    hypothesis: "",
    primary_metric: "",
    expected_direction: "increase",
    secondary_metrics: "",
  };
}

const KEY_RULE = /^[a-z0-9][a-z0-9_-]*$/;

function parseWeights(text: string): number[] | null {
  const parts = text.split(",").map((p) => p.trim()).filter((p) => p !== "");
  if (parts.length === 0) return null;
  const weights: number[] = [];
  for (const part of parts) {
    if (!/^\d+$/.test(part)) return null;
    weights.push(Number(part));
  }
  return weights;
}

function parseList(text: string): string[] {
  return text.split(",").map((p) => p.trim()).filter((p) => p !== "");
}

/** All reasons the current state cannot be submitted, in display order.
 * Empty means the create call may be attempted. */
export function validateWizard(state: WizardState): string[] {
  const errors: string[] = [];
  if (!state.experiment_key.trim()) {
    errors.push("an experiment key is required");
  } else if (!KEY_RULE.test(state.experiment_key.trim())) {
    errors.push("experiment key must be a lowercase slug " +
                "(letters, digits, - or _)");
  }
  if (!state.tracking_method.trim()) {
    errors.push("a tracking method is required");
  }
  const weights = parseWeights(state.variant_weights);
  if (weights === null) {
    errors.push("variant weights must be comma-separated whole numbers");
  } else if (weights.length < 2) {
    errors.push("an experiment needs at least 2 variants");
  } else if (weights.every((w) => w === 0)) {
    errors.push("variant weights must not all be zero");
  }
  const buckets = Number(state.exposure_buckets);
  if (!/^\d+$/.test(state.exposure_buckets.trim()) || buckets > 1000) {
    errors.push("exposure buckets must be a whole number between 0 and 1000");
  }
  if (!state.hypothesis.trim()) {
    errors.push("a pre-registered hypothesis is required before start");
  }
  if (!state.primary_metric.trim()) {
    errors.push("a primary metric is required before an experiment can start");
  }
  if (state.expected_direction !== "increase" &&
      state.expected_direction !== "decrease") {
    errors.push("expected direction must be increase or decrease");
  }
  const secondaries = parseList(state.secondary_metrics);
  if (state.primary_metric.trim() &&
      secondaries.includes(state.primary_metric.trim())) {
    errors.push("the primary metric cannot repeat in the secondary list");
  }
  return errors;
}

/** Creation payload for POST /experiments, pre-registration included. */
export function wizardPayload(state: WizardState): Record<string, unknown> {
  return {
    experiment_key: state.experiment_key.trim(),
    tracking_method: state.tracking_method.trim(),
    variant_weights: parseWeights(state.variant_weights) ?? [],
    exposure_buckets: Number(state.exposure_buckets),
    team: state.team.trim(),
    product_area: state.product_area.trim(),
    description: state.description.trim(),
    preregistration: {
      hypothesis: state.hypothesis.trim(),
      primary_metric: state.primary_metric.trim(),
      expected_direction: state.expected_direction,
      secondary_metrics: parseList(state.secondary_metrics),
    },
  };
}

const FIELDS: { name: keyof WizardState; label: string;
                kind: "input" | "select"; options?: string[] }[] = [
  { name: "experiment_key", label: "experiment key", kind: "input" },
  { name: "tracking_method", label: "tracking method", kind: "input" },
  { name: "variant_weights", label: "variant weights (comma separated)",
    kind: "input" },
  { name: "exposure_buckets", label: "exposure buckets (of 1000)",
    kind: "input" },
  { name: "team", label: "team", kind: "input" },
  { name: "product_area", label: "product area", kind: "input" },
  { name: "description", label: "description", kind: "input" },
  { name: "hypothesis", label: "hypothesis", kind: "input" },
  { name: "primary_metric", label: "primary metric", kind: "input" },
  { name: "expected_direction", label: "expected direction", kind: "select",
    options: ["increase", "decrease"] },
  { name: "secondary_metrics", label: "secondary metrics (comma separated)",
    kind: "input" },
];

/** Build the wizard form inside `root`. The submit button stays
 * disabled, with the blocking reasons listed next to it, until
 * validation passes; then a click hands the payload to `onSubmit`. */
export function mountWizard(root: HTMLElement,
                            onSubmit: (payload: Record<string, unknown>) => void): void {
  const doc = root.ownerDocument;
  const state = emptyWizardState();
  const form = doc.createElement("form");
  form.className = "wizard";
  form.addEventListener("submit", (event) => event.preventDefault());

  for (const field of FIELDS) {
    const row = doc.createElement("label");
    row.className = "wizard-row";
    const caption = doc.createElement("span");
    caption.textContent = field.label;
    row.appendChild(caption);
    let control: HTMLInputElement | HTMLSelectElement;
    if (field.kind === "select") {
      control = doc.createElement("select");
      for (const value of field.options ?? []) {
        const option = doc.createElement("option");
        option.value = value;
        option.textContent = value;
        control.appendChild(option);
      }
    } else {
      control = doc.createElement("input");
    }
    control.setAttribute("data-field", field.name);
    control.value = state[field.name];
    control.addEventListener("input", () => {
      state[field.name] = control.value;
      refresh();
    });
    control.addEventListener("change", () => {
      state[field.name] = control.value;
      refresh();
    });
    row.appendChild(control);
    form.appendChild(row);
  }

  const errorList = doc.createElement("ul");
  errorList.className = "wizard-errors";
  form.appendChild(errorList);

  const submit = doc.createElement("button");
  submit.className = "wizard-submit";
  submit.setAttribute("data-action", "create");
  submit.textContent = "Create experiment";
  submit.addEventListener("click", () => {
    if (validateWizard(state).length === 0) {
      onSubmit(wizardPayload(state));
    }
  });
  form.appendChild(submit);

  function refresh(): void {
    const errors = validateWizard(state);
    errorList.textContent = "";
    for (const error of errors) {
      const item = doc.createElement("li");
      item.className = "wizard-error";
      item.textContent = error;
      errorList.appendChild(item);
    }
    submit.disabled = errors.length > 0;
  }

  refresh();
  root.appendChild(form);
}

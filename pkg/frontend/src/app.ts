import { AnnotationFlow, type AnnotationApi, type FlowState } from "./flow.js";

export interface AppOptions {
  api: AnnotationApi;
  /** Where the annotator id is remembered between visits. */
  storage: Pick<Storage, "getItem" | "setItem">;
  initialSessionId?: string;
}

const ANNOTATOR_KEY = "attrscore.annotator";

/**
 * Wire the static page to an AnnotationFlow. Returns the flow so callers
 * (and tests) can observe state directly.
 */
export function mountApp(root: Document, options: AppOptions): AnnotationFlow {
  const el = <T extends HTMLElement>(id: string): T => {
    const node = root.getElementById(id);
    if (node === null) throw new Error(`annotator page is missing #${id}`);
    return node as T;
  };

  const landing = el<HTMLElement>("screen-landing");
  const taskScreen = el<HTMLElement>("screen-task");
  const doneScreen = el<HTMLElement>("screen-done");
  const sessionInput = el<HTMLInputElement>("session-id");
  const annotatorInput = el<HTMLInputElement>("annotator-id");
  const startButton = el<HTMLButtonElement>("start-button");
  const attributeName = el<HTMLElement>("attribute-name");
  const attributeDescription = el<HTMLElement>("attribute-description");
  const valueA = el<HTMLElement>("value-a");
  const valueB = el<HTMLElement>("value-b");
  const progress = el<HTMLElement>("progress");
  const progressFill = el<HTMLElement>("progress-fill");
  const progressText = el<HTMLElement>("progress-text");
  const doneSummary = el<HTMLElement>("done-summary");
  const errorBanner = el<HTMLElement>("error-banner");
  const errorText = el<HTMLElement>("error-text");
  const retryButton = el<HTMLButtonElement>("retry-button");
  const ratingButtons = Array.from(
    root.querySelectorAll<HTMLButtonElement>("#ratings .rating"),
  );

  const flow = new AnnotationFlow(options.api);

  sessionInput.value = options.initialSessionId ?? "";
  annotatorInput.value = options.storage.getItem(ANNOTATOR_KEY) ?? "";

  const begin = () => {
    options.storage.setItem(ANNOTATOR_KEY, annotatorInput.value.trim());
    void flow.start(sessionInput.value, annotatorInput.value);
  };

  startButton.addEventListener("click", begin);
  for (const input of [sessionInput, annotatorInput]) {
    input.addEventListener("keydown", (event) => {
      if (event.key === "Enter") begin();
    });
  }

  for (const button of ratingButtons) {
    button.addEventListener("click", () => {
      void flow.submit(Number(button.dataset.label));
    });
  }

  retryButton.addEventListener("click", () => {
    void flow.retry();
  });

  root.addEventListener("keydown", (event) => {
    const key = (event as KeyboardEvent).key;
    if (key < "1" || key > "4") return;
    const target = event.target as HTMLElement | null;
    if (target !== null && target.tagName === "INPUT") return;
    void flow.submit(Number(key));
  });

  const render = (state: FlowState) => {
    landing.hidden = state.screen !== "landing";
    taskScreen.hidden = state.screen !== "task";
    doneScreen.hidden = state.screen !== "done";
    progress.hidden = state.screen === "landing";

    errorBanner.hidden = state.error === null;
    errorText.textContent = state.error ?? "";

    const pct = state.total > 0 ? (100 * state.done) / state.total : 0;
    progressFill.style.width = `${pct}%`;
    progressText.textContent = `${state.done} / ${state.total}`;

    if (state.task !== null) {
      attributeName.textContent = state.task.attribute_name;
      attributeDescription.textContent = state.task.attribute_description;
      valueA.textContent = state.task.value_a;
      valueB.textContent = state.task.value_b;
    }
    for (const button of ratingButtons) button.disabled = state.submitting;

    if (state.screen === "done") {
      doneSummary.textContent =
        `You rated ${state.done} of ${state.total} value pairs. ` +
        "Labels are saved on the server; this tab can be closed.";
    }
  };

  flow.subscribe(render);
  return flow;
}

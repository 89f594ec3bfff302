import type { NextResponse, SubmitResponse, TaskPayload } from "./types.js";

/** The slice of the API the flow needs; ApiClient satisfies it structurally. */
export interface AnnotationApi {
  nextTask(sessionId: string, annotatorId: string): Promise<NextResponse>;
  submitLabel(
    sessionId: string,
    taskId: string,
    annotatorId: string,
    label: number,
  ): Promise<SubmitResponse>;
}

export type Screen = "landing" | "task" | "done";

export interface FlowState {
  screen: Screen;
  sessionId: string;
  annotatorId: string;
  task: TaskPayload | null;
  done: number;
  total: number;
  submitting: boolean;
  error: string | null;
}

type Listener = (state: FlowState) => void;

/**
 * Drives the annotation loop: fetch a task, accept exactly one label for it,
 * advance. All rendering hangs off subscribe(); the flow itself never touches
 * the DOM. A failed request parks its action so retry() can replay it, which
 * keeps a flaky connection from ever dropping an acknowledged label: nothing
 * counts as done until the server confirms the POST.
 */
export class AnnotationFlow {
  private readonly api: AnnotationApi;
  private readonly listeners: Listener[] = [];
  private retryAction: (() => Promise<void>) | null = null;
  private state: FlowState = {
    screen: "landing",
    sessionId: "",
    annotatorId: "",
    task: null,
    done: 0,
    total: 0,
    submitting: false,
    error: null,
  };

  constructor(api: AnnotationApi) {
    this.api = api;
  }

  subscribe(listener: Listener): void {
    this.listeners.push(listener);
    listener(this.snapshot());
  }

  snapshot(): FlowState {
    return { ...this.state };
  }

  async start(sessionId: string, annotatorId: string): Promise<void> {
    const session = sessionId.trim();
    const annotator = annotatorId.trim();
    if (session === "" || annotator === "") {
      this.update({ error: "enter both a session id and an annotator id" });
      return;
    }
    this.update({ sessionId: session, annotatorId: annotator, error: null });
    await this.fetchNext();
  }

  /** Submit a label for the task on screen. No-op unless one is showing. */
  async submit(label: number): Promise<void> {
    const { task, screen, submitting } = this.state;
    if (screen !== "task" || task === null || submitting) return;
    if (!Number.isInteger(label) || label < 1 || label > 4) return;
    await this.performSubmit(task.task_id, label);
  }

  /** Replay whatever request last failed, if any. */
  async retry(): Promise<void> {
    const action = this.retryAction;
    if (action !== null) await action();
  }

  private async fetchNext(): Promise<void> {
    this.retryAction = () => this.fetchNext();
    try {
      const next = await this.api.nextTask(this.state.sessionId, this.state.annotatorId);
      this.retryAction = null;
      this.update({
        screen: next.task === null ? "done" : "task",
        task: next.task,
        done: next.done,
        total: next.total,
        submitting: false,
        error: null,
      });
    } catch (err) {
      this.update({ submitting: false, error: messageOf(err) });
    }
  }

  private async performSubmit(taskId: string, label: number): Promise<void> {
    this.retryAction = () => this.performSubmit(taskId, label);
    this.update({ submitting: true, error: null });
    try {
      await this.api.submitLabel(this.state.sessionId, taskId, this.state.annotatorId, label);
    } catch (err) {
      this.update({ submitting: false, error: messageOf(err) });
      return;
    }
    await this.fetchNext();
  }

  private update(patch: Partial<FlowState>): void {
    this.state = { ...this.state, ...patch };
    const snapshot = this.snapshot();
    for (const listener of this.listeners) listener(snapshot);
  }
}

function messageOf(err: unknown): string {
  if (err instanceof Error) return err.message;
  return String(err);
}

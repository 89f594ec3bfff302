/** Wire types for the annotation endpoints of the attrscore service. */

/** One blinded value pair, exactly as the server sends it. */
export interface TaskPayload {
  task_id: string;
  attribute_key: string;
  attribute_name: string;
  attribute_description: string;
  value_a: string;
  value_b: string;
}

export interface NextResponse {
  task: TaskPayload | null;
  done: number;
  total: number;
}

export interface SubmitResponse {
  ok: boolean;
  task_id: string;
  label: number;
}

export interface ProgressResponse {
  total_tasks: number;
  annotators: Record<string, number>;
}

/** Sentinel the server uses when an attribute is absent on one side. */
export const ABSENT_DISPLAY = "NONE";

export const LABEL_NAMES: Record<number, string> = {
  1: "Not similar",
  2: "Somewhat similar",
  3: "Very similar",
  4: "Essentially the same",
};

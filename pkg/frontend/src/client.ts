/** HTTP client for the worksheet protocol. Transport only: every
 * mathematical judgement comes from the service. */

export interface Envelope {
  v: number;
  kind: "request" | "response" | "notification";
  id?: number | null;
  method: string;
  payload: Record<string, unknown>;
}

export class ServiceError extends Error {
  constructor(public code: string, message: string) {
    super(message);
  }
}

export interface Ref {
  theory: string | null;
  problem: string[] | null;
  method: string[] | null;
}

export class ServiceClient {
  private nextId = 1;
  session = "";

  constructor(private base: string) {}

  async rpc(method: string, payload: Record<string, unknown> = {}): Promise<any> {
    const envelope: Envelope = {
      v: 1,
      kind: "request",
      id: this.nextId++,
      method,
      payload,
    };
    const resp = await fetch(`${this.base}/rpc`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(envelope),
    });
    const answer = (await resp.json()) as Envelope;
    const p = answer.payload as any;
    if (p && typeof p === "object" && p.error) {
      throw new ServiceError(p.error.code, p.error.message);
    }
    return p;
  }

  async newSession(user: string): Promise<string> {
    const out = await this.rpc("session.new", { user });
    this.session = out.session;
    return this.session;
  }

  private ws(worksheet: string, extra: Record<string, unknown> = {}) {
    return { session: this.session, worksheet, ...extra };
  }

  health() {
    return this.rpc("meta.health");
  }

  examples() {
    return this.rpc("know.examples");
  }

  tree(kind: "theory" | "problem" | "method") {
    return this.rpc("know.tree", { kind });
  }

  entry(kind: string, path: string[]) {
    return this.rpc("know.entry", { kind, path });
  }

  rules(ruleset: string, worksheet?: string) {
    const payload: Record<string, unknown> = { ruleset };
    if (worksheet) {
      payload.session = this.session;
      payload.worksheet = worksheet;
    }
    return this.rpc("know.rules", payload);
  }

  init(worksheet: string, example: string) {
    return this.rpc("calc.init", this.ws(worksheet, { example }));
  }

  snapshot(worksheet: string) {
    return this.rpc("calc.snapshot", this.ws(worksheet));
  }

  next(worksheet: string) {
    return this.rpc("calc.next", this.ws(worksheet));
  }

  inputFormula(worksheet: string, text: string) {
    return this.rpc("calc.input_formula", this.ws(worksheet, { text }));
  }

  applicable(worksheet: string) {
    return this.rpc("calc.applicable", this.ws(worksheet));
  }

  postcondition(worksheet: string) {
    return this.rpc("calc.postcondition", this.ws(worksheet));
  }

  fillItem(worksheet: string, word: string, text: string) {
    return this.rpc("spec.fill_item", this.ws(worksheet, { word, text }));
  }

  checkPreconditions(worksheet: string) {
    return this.rpc("spec.check_preconditions", this.ws(worksheet));
  }

  toggleView(worksheet: string, view?: string) {
    return this.rpc("spec.toggle_view", this.ws(worksheet, view ? { view } : {}));
  }

  sequence(example: string, paths: string[][], extraItems: { word: string; text: string }[] = []) {
    return this.rpc("spec.sequence", { example, paths, extra_items: extraItems });
  }

  setMode(mode: "normal" | "exam") {
    return this.rpc("dialog.set_mode", { session: this.session, mode });
  }

  async events(): Promise<Envelope[]> {
    const resp = await fetch(`${this.base}/events?session=${this.session}`);
    const out = await resp.json();
    return out.events as Envelope[];
  }
}

/**
 * Console wiring: fetch a view, render it, and refetch after every action
 * (no optimistic updates; peels are irreversible and human-paced).
 */

import { Client, ServiceError } from "./api";
import { makeViewModel, type ViewModel } from "./state";
import { render, type Actions } from "./render";

export class Console {
  private vm: ViewModel | null = null;
  private errorText: string | null = null;

  constructor(
    private readonly root: HTMLElement,
    private readonly client: Client,
    private readonly token: string,
  ) {}

  async refresh(): Promise<void> {
    const view = await this.client.view(this.token);
    this.vm = makeViewModel(view, this.vm ?? undefined);
    this.errorText = null;
    this.paint();
  }

  private paint(): void {
    if (!this.vm) return;
    render(this.root, this.vm, this.actions(), this.errorText);
  }

  private actions(): Actions {
    return {
      onSelectCandidate: (index) => {
        if (this.vm) {
          this.vm = { ...this.vm, selected: index };
          this.paint();
        }
      },
      onConfirmPeel: (ids) => void this.run(() => this.client.peel(this.token, ids)),
      onAutostep: (k) => void this.run(() => this.client.autostep(this.token, k)),
    };
  }

  private async run(action: () => Promise<unknown>): Promise<void> {
    try {
      await action();
      await this.refresh();
    } catch (err) {
      // show server messages (which carry the field path) verbatim
      this.errorText = err instanceof ServiceError ? err.message : String(err);
      this.paint();
    }
  }
}

export async function attach(
  root: HTMLElement,
  baseUrl: string,
  token: string,
): Promise<Console> {
  const console_ = new Console(root, new Client(baseUrl), token);
  await console_.refresh();
  return console_;
}

declare global {
  interface Window {
    peelfdrConsole?: Console;
  }
}

if (typeof window !== "undefined" && typeof document !== "undefined") {
  const params = new URLSearchParams(window.location.search);
  const token = params.get("token");
  const base = params.get("base") ?? "http://127.0.0.1:8000";
  const root = document.getElementById("console-root");
  if (token && root) {
    attach(root, base, token)
      .then((c) => {
        window.peelfdrConsole = c;
      })
      .catch((err) => {
        root.textContent = `failed to load session: ${String(err)}`;
      });
  }
}

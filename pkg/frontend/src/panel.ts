// Control panel: record/clutch/calibrate/anchor buttons, episode list with
// replay + progress, gauge bars, and toasts for API errors.

import { ControlApi } from "./api";
import { TargetPose } from "./pose";
import { SessionController } from "./session";
import { GaugeView, ReplayView } from "./state";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  cls?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (cls) node.className = cls;
  if (text !== undefined) node.textContent = text;
  return node;
}

export class Panel {
  private recordBtn: HTMLButtonElement;
  private clutchBtn: HTMLButtonElement;
  private episodeSelect: HTMLSelectElement;
  private replayBtn: HTMLButtonElement;
  private cancelBtn: HTMLButtonElement;
  private progress: HTMLDivElement;
  private progressFill: HTMLDivElement;
  private statusLine: HTMLDivElement;
  private toastBox: HTMLDivElement;
  private bars: Record<string, { fill: HTMLDivElement; marker: HTMLDivElement; label: HTMLDivElement }> = {};
  private pollTimer: number | null = null;
  /** called when the user asks to capture the current alignment */
  onCalibrate: (() => TargetPose | undefined) | null = null;
  /** called when the user places the base on the floor grid */
  onPlaceBase: (() => TargetPose | undefined) | null = null;

  constructor(
    private root: HTMLElement,
    private session: SessionController,
  ) {
    const api = session.api;

    this.statusLine = el("div", "status-line", "disconnected");
    root.appendChild(this.statusLine);

    const controls = el("div", "controls");
    this.recordBtn = el("button", "", "record");
    this.recordBtn.onclick = () => this.toggleRecord();
    this.clutchBtn = el("button", "", "clutch: on");
    this.clutchBtn.onclick = () => this.toggleClutch();
    const calBtn = el("button", "", "calibrate");
    calBtn.onclick = () => this.calibrate();
    const baseBtn = el("button", "", "place base");
    baseBtn.onclick = () => this.placeBase();
    controls.append(this.recordBtn, this.clutchBtn, calBtn, baseBtn);
    root.appendChild(controls);

    const gaugeBox = el("div", "gauges");
    for (const [key, label] of [
      ["rate", "joint rate r"],
      ["manipulability", "manipulability w"],
      ["residual", "ik error e"],
    ] as const) {
      const row = el("div", "gauge");
      const lab = el("div", "gauge-label", label);
      const bar = el("div", "gauge-bar");
      const fill = el("div", "gauge-fill");
      const marker = el("div", "gauge-marker");
      bar.append(fill, marker);
      row.append(lab, bar);
      gaugeBox.appendChild(row);
      this.bars[key] = { fill, marker, label: lab };
    }
    root.appendChild(gaugeBox);

    const replayBox = el("div", "replay-box");
    this.episodeSelect = el("select");
    const refreshBtn = el("button", "", "refresh");
    refreshBtn.onclick = () => this.refreshEpisodes();
    this.replayBtn = el("button", "", "replay");
    this.replayBtn.onclick = () => this.startReplay();
    this.cancelBtn = el("button", "", "cancel");
    this.cancelBtn.onclick = () => this.cancelReplay();
    this.cancelBtn.disabled = true;
    this.progress = el("div", "progress");
    this.progressFill = el("div", "progress-fill");
    this.progress.appendChild(this.progressFill);
    replayBox.append(this.episodeSelect, refreshBtn, this.replayBtn, this.cancelBtn, this.progress);
    root.appendChild(replayBox);

    this.toastBox = el("div", "toasts");
    root.appendChild(this.toastBox);

    void api; // api reached through this.session below
  }

  async refreshEpisodes(): Promise<void> {
    const res = await this.session.api.listEpisodes();
    if (res.status !== 200) return this.toast(`episodes: ${res.status}`);
    this.episodeSelect.replaceChildren(
      ...res.body.map((id: string) => {
        const opt = el("option", "", id);
        opt.value = id;
        return opt;
      }),
    );
  }

  private async toggleRecord(): Promise<void> {
    const recording = this.session.state.recording;
    const res = recording
      ? await this.session.api.recordStop()
      : await this.session.api.recordStart();
    if (res.status !== 200) {
      this.toast(`record: ${res.status} ${res.body?.error ?? ""}`);
      return;
    }
    this.session.state.recording = !recording;
    this.session.state.episodeId = recording ? null : res.body.id;
    this.recordBtn.textContent = recording ? "record" : "stop";
    if (recording) this.refreshEpisodes();
  }

  private async toggleClutch(): Promise<void> {
    await this.session.setClutch(!this.session.state.clutchEngaged);
    this.clutchBtn.textContent = `clutch: ${this.session.state.clutchEngaged ? "on" : "off"}`;
  }

  private async calibrate(): Promise<void> {
    const desired = this.onCalibrate?.();
    const res = await this.session.api.calibrate(undefined, desired);
    if (res.status !== 200) this.toast(`calibrate: ${res.status} ${res.body?.error ?? ""}`);
    else this.toast("calibrated");
  }

  private async placeBase(): Promise<void> {
    const pose = this.onPlaceBase?.();
    const res = await this.session.api.setAnchor(pose);
    if (res.status !== 200) this.toast(`anchor: ${res.status} ${res.body?.error ?? ""}`);
    else this.toast("base placed");
  }

  private async startReplay(): Promise<void> {
    const id = this.episodeSelect.value;
    if (!id) return this.toast("no episode selected");
    const res = await this.session.api.startReplay(id);
    if (res.status !== 202) {
      this.toast(`replay: ${res.status} ${res.body?.error ?? ""}`);
      return;
    }
    this.session.state.onReplay({
      job: res.body.job,
      status: res.body.status,
      progress: 0,
      episodeId: id,
    });
    this.cancelBtn.disabled = false;
    this.pollReplay(res.body.job, id);
  }

  private pollReplay(job: string, episodeId: string): void {
    if (this.pollTimer !== null) clearInterval(this.pollTimer);
    this.pollTimer = window.setInterval(async () => {
      const res = await this.session.api.replayStatus(job);
      if (res.status !== 200) return;
      const view: ReplayView = {
        job,
        episodeId,
        status: res.body.status,
        progress: res.body.progress ?? 0,
        report: res.body.report,
        error: res.body.error,
      };
      this.session.state.onReplay(view);
      if (["done", "failed", "cancelled"].includes(view.status)) {
        clearInterval(this.pollTimer!);
        this.pollTimer = null;
        this.cancelBtn.disabled = true;
        this.toast(
          view.status === "done"
            ? `replay done: ${view.report?.success ? "success" : "infeasible ticks"}`
            : `replay ${view.status}${view.error ? `: ${view.error}` : ""}`,
        );
      }
    }, 150);
  }

  private async cancelReplay(): Promise<void> {
    const job = this.session.state.replay?.job;
    if (!job) return;
    const res = await this.session.api.cancelReplay(job);
    if (res.status !== 200) this.toast(`cancel: ${res.status} ${res.body?.error ?? ""}`);
  }

  toast(message: string): void {
    this.session.state.toast(message);
    const node = el("div", "toast", message);
    this.toastBox.appendChild(node);
    setTimeout(() => node.remove(), 4000);
  }

  /** Per-frame refresh from the latest state. */
  update(): void {
    const s = this.session.state;
    this.statusLine.textContent =
      `${s.connection}` +
      (s.recording ? ` | recording ${s.episodeId ?? ""}` : "") +
      (s.latest ? ` | frame ${s.latest.frame_index} ${s.latest.state}` : "");
    const gauges = s.gauges();
    for (const key of ["rate", "manipulability", "residual"] as const) {
      this.applyGauge(this.bars[key], gauges[key]);
    }
    const replay = s.replay;
    this.progressFill.style.width = replay ? `${Math.round(replay.progress * 100)}%` : "0%";
    this.progress.dataset.status = replay?.status ?? "idle";
  }

  private applyGauge(
    bar: { fill: HTMLDivElement; marker: HTMLDivElement },
    view: GaugeView,
  ): void {
    bar.fill.style.width = `${Math.round(view.fill * 100)}%`;
    bar.fill.classList.toggle("alarmed", view.alarmed);
    if (view.marker !== undefined) {
      bar.marker.style.left = `${Math.round(view.marker * 100)}%`;
    }
  }
}

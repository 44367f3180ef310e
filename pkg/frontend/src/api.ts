// Thin wrappers over the control API. 4xx responses come back as values
// (status + body) so the panel can surface them as toasts instead of
// throwing across the event loop.

import { TargetPose, toNested } from "./pose";

export interface ApiResult<T = any> {
  status: number;
  body: T;
}

async function call(method: string, url: string, body?: unknown): Promise<ApiResult> {
  const resp = await fetch(url, {
    method,
    headers: body !== undefined ? { "Content-Type": "application/json" } : undefined,
    body: body !== undefined ? JSON.stringify(body) : undefined,
  });
  let parsed: any = null;
  try {
    parsed = await resp.json();
  } catch {
    parsed = null;
  }
  return { status: resp.status, body: parsed };
}

export class ControlApi {
  constructor(readonly base: string) {}

  listEpisodes(): Promise<ApiResult<string[]>> {
    return call("GET", `${this.base}/episodes`);
  }

  episodeStats(id: string): Promise<ApiResult> {
    return call("GET", `${this.base}/episodes/${id}/stats`);
  }

  startReplay(episodeId: string, speedScale = 1.0): Promise<ApiResult> {
    return call("POST", `${this.base}/replay`, {
      episode_id: episodeId,
      speed_scale: speedScale,
    });
  }

  replayStatus(job: string): Promise<ApiResult> {
    return call("GET", `${this.base}/replay/${job}`);
  }

  cancelReplay(job: string): Promise<ApiResult> {
    return call("DELETE", `${this.base}/replay/${job}`);
  }

  sessionStatus(): Promise<ApiResult> {
    return call("GET", `${this.base}/session`);
  }

  setClutch(engaged: boolean): Promise<ApiResult> {
    return call("POST", `${this.base}/session/clutch`, { engaged });
  }

  calibrate(devicePose?: TargetPose, desiredTcpPose?: TargetPose): Promise<ApiResult> {
    const body: any = {};
    if (devicePose) body.device_pose = toNested(devicePose);
    if (desiredTcpPose) body.desired_tcp_pose = toNested(desiredTcpPose);
    return call("POST", `${this.base}/session/calibrate`, body);
  }

  setAnchor(pose?: TargetPose): Promise<ApiResult> {
    return call("POST", `${this.base}/session/anchor`, pose ? { pose: toNested(pose) } : {});
  }

  recordStart(episodeId?: string): Promise<ApiResult> {
    return call("POST", `${this.base}/record/start`, episodeId ? { episode_id: episodeId } : {});
  }

  recordStop(): Promise<ApiResult> {
    return call("POST", `${this.base}/record/stop`, {});
  }
}

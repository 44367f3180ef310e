// Server-sent events over fetch streaming, usable in browsers and node
// (no EventSource dependency). Yields parsed JSON payloads of data lines.

export async function* sseEvents(
  url: string,
  signal?: AbortSignal,
): AsyncGenerator<unknown> {
  const resp = await fetch(url, { signal, headers: { Accept: "text/event-stream" } });
  if (!resp.ok || resp.body === null) {
    throw new Error(`feed connect failed: ${resp.status}`);
  }
  const reader = resp.body.getReader();
  const decoder = new TextDecoder();
  let buf = "";
  try {
    for (;;) {
      const { done, value } = await reader.read();
      if (done) return;
      buf += decoder.decode(value, { stream: true });
      for (;;) {
        const cut = buf.indexOf("\n\n");
        if (cut < 0) break;
        const event = buf.slice(0, cut);
        buf = buf.slice(cut + 2);
        for (const line of event.split("\n")) {
          if (line.startsWith("data: ")) {
            yield JSON.parse(line.slice(6));
          }
        }
      }
    }
  } finally {
    reader.releaseLock();
  }
}

/** Parse already-buffered SSE text (used by tests). */
export function parseSseChunk(buf: string): { events: unknown[]; rest: string } {
  const events: unknown[] = [];
  for (;;) {
    const cut = buf.indexOf("\n\n");
    if (cut < 0) break;
    const event = buf.slice(0, cut);
    buf = buf.slice(cut + 2);
    for (const line of event.split("\n")) {
      if (line.startsWith("data: ")) events.push(JSON.parse(line.slice(6)));
    }
  }
  return { events, rest: buf };
}

import { describe, expect, it } from "vitest";
import { parseSseChunk } from "../src/feed";

describe("sse parsing", () => {
  it("extracts data payloads from complete events", () => {
    const { events, rest } = parseSseChunk(
      'data: {"a":1}\n\n: keepalive\n\ndata: {"a":2}\n\n',
    );
    expect(events).toEqual([{ a: 1 }, { a: 2 }]);
    expect(rest).toBe("");
  });

  it("keeps incomplete trailing events in the buffer", () => {
    const { events, rest } = parseSseChunk('data: {"a":1}\n\ndata: {"par');
    expect(events).toEqual([{ a: 1 }]);
    expect(rest).toBe('data: {"par');
  });

  it("ignores comment keepalives", () => {
    const { events } = parseSseChunk(": keepalive\n\n: another\n\n");
    expect(events).toEqual([]);
  });
});

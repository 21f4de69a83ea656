import { describe, expect, it } from "vitest";

import { StudioClient } from "../src/client";
import { bytesHash } from "../src/requests";
import { StudioState } from "../src/state";
import { FakeService } from "./fake-service";

async function setup() {
  const service = new FakeService(2);
  const client = new StudioClient("http://studio.test", service.fetch);
  const state = new StudioState();
  await state.connect(client);
  return { service, client, state };
}

describe("transition sweep semantics", () => {
  it("t=0 and t=1 renders hash-equal to the vertex renders", async () => {
    const { client, state } = await setup();
    state.setT(0);
    const start = await client.render(state.sweepBody(128));
    const vertex0 = await client.render(state.vertexBody(0, 128));
    expect(bytesHash(start.bytes)).toBe(bytesHash(vertex0.bytes));

    state.setT(1);
    const end = await client.render(state.sweepBody(128));
    const vertex1 = await client.render(state.vertexBody(1, 128));
    expect(bytesHash(end.bytes)).toBe(bytesHash(vertex1.bytes));
  });

  it("the midpoint differs from both endpoints", async () => {
    const { client, state } = await setup();
    state.setT(0.5);
    const mid = await client.render(state.sweepBody(128));
    const v0 = await client.render(state.vertexBody(0, 128));
    const v1 = await client.render(state.vertexBody(1, 128));
    expect(bytesHash(mid.bytes)).not.toBe(bytesHash(v0.bytes));
    expect(bytesHash(mid.bytes)).not.toBe(bytesHash(v1.bytes));
  });
});

describe("anchor dragging", () => {
  it("dragging across the midpoint switches the dominant object", async () => {
    const { client, state } = await setup();
    state.addAnchor([0.05, 0, 0], 0); // nearest the center: vertex 0 dominates
    state.addAnchor([0.5, 0, 0], 1);
    const before = await client.render(state.anchorsBody(128));
    state.dragAnchor(0, [0.7, 0, 0]); // now anchor 1 is nearest the center
    const after = await client.render(state.anchorsBody(128));
    expect(bytesHash(before.bytes)).not.toBe(bytesHash(after.bytes));
  });
});

import { describe, expect, it } from "vitest";

import { ribbonPath, sankeyLayout } from "../src/sankey";
import type { Flow } from "../src/types";

const FLOWS: Flow[] = [
  { source: "theft in a shop", target: "retail theft", weight: 200 },
  { source: "theft at work", target: "commercial theft", weight: 60 },
  { source: "breaking into another object", target: "commercial theft", weight: 100 },
  { source: "robbing of cellars", target: "residential theft", weight: 40 },
];

describe("sankeyLayout", () => {
  it("lays nodes into two columns", () => {
    const layout = sankeyLayout(FLOWS, { width: 600, height: 400, nodeWidth: 10 });
    const left = layout.nodes.filter((n) => n.side === "left");
    const right = layout.nodes.filter((n) => n.side === "right");
    expect(left.map((n) => n.name)).toEqual(
      ["breaking into another object", "robbing of cellars", "theft at work", "theft in a shop"],
    );
    expect(right).toHaveLength(3);
    expect(left.every((n) => n.x === 0)).toBe(true);
    expect(right.every((n) => n.x === 590)).toBe(true);
  });

  it("makes node heights proportional to weight", () => {
    const layout = sankeyLayout(FLOWS, { height: 400, gap: 0 });
    const byName = new Map(layout.nodes.map((n) => [n.name, n]));
    const shop = byName.get("theft in a shop")!;
    const cellars = byName.get("robbing of cellars")!;
    expect(shop.height / cellars.height).toBeCloseTo(200 / 40, 5);
    const leftTotal = layout.nodes
      .filter((n) => n.side === "left")
      .reduce((a, n) => a + n.height, 0);
    expect(leftTotal).toBeCloseTo(400, 3);
  });

  it("stacks each node's ribbons exactly over its height", () => {
    const layout = sankeyLayout(FLOWS);
    const commercial = layout.nodes.find((n) => n.name === "commercial theft")!;
    const incoming = layout.links.filter((l) => l.target === "commercial theft");
    expect(incoming).toHaveLength(2);
    const stacked = incoming.reduce((a, l) => a + l.th, 0);
    expect(stacked).toBeCloseTo(commercial.height, 5);
    const sortedBySy = [...incoming].sort((a, b) => a.ty - b.ty);
    expect(sortedBySy[0].ty).toBeCloseTo(commercial.y, 5);
  });

  it("keeps weights verbatim from the service", () => {
    const layout = sankeyLayout(FLOWS);
    expect(layout.links.map((l) => l.weight).sort((a, b) => a - b)).toEqual([40, 60, 100, 200]);
  });

  it("handles the empty case", () => {
    const layout = sankeyLayout([]);
    expect(layout.nodes).toEqual([]);
    expect(layout.links).toEqual([]);
  });

  it("is deterministic for a given flow list", () => {
    const a = sankeyLayout([...FLOWS].reverse());
    const b = sankeyLayout(FLOWS);
    expect(a).toEqual(b);
  });
});

describe("ribbonPath", () => {
  it("builds a closed path spanning both ends", () => {
    const layout = sankeyLayout(FLOWS);
    const path = ribbonPath(layout.links[0]);
    expect(path.startsWith("M ")).toBe(true);
    expect(path.endsWith("Z")).toBe(true);
    expect(path).toContain("C ");
  });
});

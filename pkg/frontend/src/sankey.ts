// Geometry for the expert-vs-auto mapping view. The weights come straight
// from the service's flow export; this module only lays out rectangles and
// ribbons for two columns of nodes.

import type { Flow } from "./types.js";

export interface SankeyNode {
  name: string;
  side: "left" | "right";
  x: number;
  y: number;
  width: number;
  height: number;
  total: number;
}

export interface SankeyLink {
  source: string;
  target: string;
  weight: number;
  sx: number;
  sy: number;
  sh: number;
  tx: number;
  ty: number;
  th: number;
}

export interface SankeyLayout {
  width: number;
  height: number;
  nodes: SankeyNode[];
  links: SankeyLink[];
}

export interface SankeyOptions {
  width?: number;
  height?: number;
  nodeWidth?: number;
  gap?: number;
}

function totalsBy(flows: Flow[], key: "source" | "target"): Map<string, number> {
  const totals = new Map<string, number>();
  for (const flow of flows) {
    totals.set(flow[key], (totals.get(flow[key]) ?? 0) + flow.weight);
  }
  return totals;
}

/**
 * Two-column Sankey layout: node heights are proportional to their total
 * weight, and each node's ribbons stack in a stable (alphabetical) order so
 * the picture is deterministic for a given flow list.
 */
export function sankeyLayout(flows: Flow[], options: SankeyOptions = {}): SankeyLayout {
  const width = options.width ?? 760;
  const height = options.height ?? 480;
  const nodeWidth = options.nodeWidth ?? 14;
  const gap = options.gap ?? 8;

  const ordered = [...flows].sort(
    (a, b) => a.source.localeCompare(b.source) || a.target.localeCompare(b.target),
  );
  const leftTotals = totalsBy(ordered, "source");
  const rightTotals = totalsBy(ordered, "target");
  const grand = [...leftTotals.values()].reduce((a, b) => a + b, 0);
  if (grand === 0) {
    return { width, height, nodes: [], links: [] };
  }

  const layoutColumn = (
    totals: Map<string, number>,
    side: "left" | "right",
  ): Map<string, SankeyNode> => {
    const names = [...totals.keys()].sort((a, b) => a.localeCompare(b));
    const usable = height - gap * Math.max(0, names.length - 1);
    const scale = usable / grand;
    const nodes = new Map<string, SankeyNode>();
    let y = 0;
    for (const name of names) {
      const nodeHeight = (totals.get(name) ?? 0) * scale;
      nodes.set(name, {
        name,
        side,
        x: side === "left" ? 0 : width - nodeWidth,
        y,
        width: nodeWidth,
        height: nodeHeight,
        total: totals.get(name) ?? 0,
      });
      y += nodeHeight + gap;
    }
    return nodes;
  };

  const leftNodes = layoutColumn(leftTotals, "left");
  const rightNodes = layoutColumn(rightTotals, "right");

  const sourceCursor = new Map<string, number>();
  const targetCursor = new Map<string, number>();
  const links: SankeyLink[] = [];
  for (const flow of ordered) {
    const source = leftNodes.get(flow.source)!;
    const target = rightNodes.get(flow.target)!;
    const sScale = source.total > 0 ? source.height / source.total : 0;
    const tScale = target.total > 0 ? target.height / target.total : 0;
    const sh = flow.weight * sScale;
    const th = flow.weight * tScale;
    const sy = source.y + (sourceCursor.get(flow.source) ?? 0);
    const ty = target.y + (targetCursor.get(flow.target) ?? 0);
    sourceCursor.set(flow.source, (sourceCursor.get(flow.source) ?? 0) + sh);
    targetCursor.set(flow.target, (targetCursor.get(flow.target) ?? 0) + th);
    links.push({
      source: flow.source,
      target: flow.target,
      weight: flow.weight,
      sx: source.x + source.width,
      sy,
      sh,
      tx: target.x,
      ty,
      th,
    });
  }

  return {
    width,
    height,
    nodes: [...leftNodes.values(), ...rightNodes.values()],
    links,
  };
}

/** SVG path for one ribbon (a filled band between two vertical segments). */
export function ribbonPath(link: SankeyLink): string {
  const mid = (link.sx + link.tx) / 2;
  return [
    `M ${link.sx} ${link.sy}`,
    `C ${mid} ${link.sy}, ${mid} ${link.ty}, ${link.tx} ${link.ty}`,
    `L ${link.tx} ${link.ty + link.th}`,
    `C ${mid} ${link.ty + link.th}, ${mid} ${link.sy + link.sh}, ${link.sx} ${link.sy + link.sh}`,
    "Z",
  ].join(" ");
}

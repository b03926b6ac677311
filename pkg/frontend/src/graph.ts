// Client-side layout for the impact graph: nodes grouped into columns by
// impact depth (targets at depth 0), edges drawn from the DOT export the
// API ships.  No server-side rendering involved.

import type { ImpactBody } from "./types.js";

export interface ParsedEdge {
  from: string;
  to: string;
  kind: string;
}

const EDGE_RE = /^\s*"([^"]+)"\s*->\s*"([^"]+)"\s*\[label="([^"]+)"/;
const NODE_RE = /^\s*"([^"]+)"(?:\s*\[|;)/;

export function parseDot(dot: string): { nodes: string[]; edges: ParsedEdge[] } {
  const nodes: string[] = [];
  const edges: ParsedEdge[] = [];
  for (const line of dot.split("\n")) {
    const edge = EDGE_RE.exec(line);
    if (edge) {
      edges.push({ from: edge[1]!, to: edge[2]!, kind: edge[3]! });
      continue;
    }
    const node = NODE_RE.exec(line);
    if (node && !line.includes("->")) nodes.push(node[1]!);
  }
  return { nodes, edges };
}

export function layoutColumns(
  nodes: string[],
  affected: Record<string, number>,
): Map<string, { x: number; y: number }> {
  const depths = nodes.map((n) => affected[n]);
  const maxDepth = Math.max(0, ...depths.filter((d): d is number => d !== undefined));
  const columns = new Map<number, string[]>();
  for (const node of nodes) {
    const depth = affected[node] ?? maxDepth + 1; // unaffected nodes trail
    const column = columns.get(depth) ?? [];
    column.push(node);
    columns.set(depth, column);
  }
  const positions = new Map<string, { x: number; y: number }>();
  for (const [depth, members] of columns) {
    members.sort();
    members.forEach((node, i) => {
      positions.set(node, { x: 90 + depth * 150, y: 50 + i * 70 });
    });
  }
  return positions;
}

export function renderImpactSvg(impact: ImpactBody, doc: Document): SVGSVGElement {
  const SVG_NS = "http://www.w3.org/2000/svg";
  const { nodes, edges } = parseDot(impact.dot);
  const positions = layoutColumns(nodes, impact.affected);
  const width = Math.max(...[...positions.values()].map((p) => p.x)) + 110;
  const height = Math.max(...[...positions.values()].map((p) => p.y)) + 60;

  const svg = doc.createElementNS(SVG_NS, "svg");
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  svg.setAttribute("class", "impact-graph");

  for (const edge of edges) {
    const a = positions.get(edge.from);
    const b = positions.get(edge.to);
    if (!a || !b) continue;
    const line = doc.createElementNS(SVG_NS, "line");
    line.setAttribute("x1", String(a.x));
    line.setAttribute("y1", String(a.y));
    line.setAttribute("x2", String(b.x));
    line.setAttribute("y2", String(b.y));
    line.setAttribute("class", edge.kind === "Conflicts" ? "edge conflict" : "edge");
    svg.appendChild(line);
    const label = doc.createElementNS(SVG_NS, "text");
    label.setAttribute("x", String((a.x + b.x) / 2));
    label.setAttribute("y", String((a.y + b.y) / 2 - 4));
    label.setAttribute("class", "edge-label");
    label.textContent = edge.kind;
    svg.appendChild(label);
  }
  for (const node of nodes) {
    const pos = positions.get(node)!;
    const depth = impact.affected[node];
    const circle = doc.createElementNS(SVG_NS, "circle");
    circle.setAttribute("cx", String(pos.x));
    circle.setAttribute("cy", String(pos.y));
    circle.setAttribute("r", "22");
    circle.setAttribute(
      "class",
      depth === 0 ? "node target" : depth !== undefined ? "node affected" : "node",
    );
    svg.appendChild(circle);
    const text = doc.createElementNS(SVG_NS, "text");
    text.setAttribute("x", String(pos.x));
    text.setAttribute("y", String(pos.y + 4));
    text.setAttribute("text-anchor", "middle");
    text.setAttribute("class", "node-label");
    text.textContent = depth !== undefined ? `${node} (d${depth})` : node;
    svg.appendChild(text);
  }
  return svg;
}

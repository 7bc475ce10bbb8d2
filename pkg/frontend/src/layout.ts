// Small deterministic force-directed layout; no rendering dependencies.

import { GraphEdge, GraphNode } from './model.js';

export interface Point {
  x: number;
  y: number;
}

export function computeLayout(
  nodes: GraphNode[],
  edges: GraphEdge[],
  width: number,
  height: number,
  iterations = 120,
): Map<string, Point> {
  const positions = new Map<string, Point>();
  const centerX = width / 2;
  const centerY = height / 2;
  const radius = Math.min(width, height) / 2 - 40;
  nodes.forEach((node, index) => {
    const angle = (2 * Math.PI * index) / Math.max(nodes.length, 1);
    positions.set(node.id, {
      x: centerX + radius * Math.cos(angle),
      y: centerY + radius * Math.sin(angle),
    });
  });
  if (nodes.length < 2) {
    return positions;
  }

  const springLength = Math.max(70, radius / 2);
  const repulsion = 6000;
  for (let step = 0; step < iterations; step += 1) {
    const forces = new Map<string, Point>(nodes.map((n) => [n.id, { x: 0, y: 0 }]));
    for (let i = 0; i < nodes.length; i += 1) {
      for (let j = i + 1; j < nodes.length; j += 1) {
        const a = positions.get(nodes[i].id)!;
        const b = positions.get(nodes[j].id)!;
        const dx = a.x - b.x;
        const dy = a.y - b.y;
        const distSq = Math.max(dx * dx + dy * dy, 25);
        const push = repulsion / distSq;
        const dist = Math.sqrt(distSq);
        const fx = (dx / dist) * push;
        const fy = (dy / dist) * push;
        const fa = forces.get(nodes[i].id)!;
        const fb = forces.get(nodes[j].id)!;
        fa.x += fx;
        fa.y += fy;
        fb.x -= fx;
        fb.y -= fy;
      }
    }
    for (const edge of edges) {
      const a = positions.get(edge.source);
      const b = positions.get(edge.target);
      if (!a || !b) continue;
      const dx = b.x - a.x;
      const dy = b.y - a.y;
      const dist = Math.max(Math.sqrt(dx * dx + dy * dy), 5);
      const pull = (dist - springLength) * 0.02;
      const fa = forces.get(edge.source)!;
      const fb = forces.get(edge.target)!;
      fa.x += (dx / dist) * pull;
      fa.y += (dy / dist) * pull;
      fb.x -= (dx / dist) * pull;
      fb.y -= (dy / dist) * pull;
    }
    const cooling = 1 - step / iterations;
    for (const node of nodes) {
      const position = positions.get(node.id)!;
      const force = forces.get(node.id)!;
      // gentle gravity toward the canvas center
      force.x += (centerX - position.x) * 0.01;
      force.y += (centerY - position.y) * 0.01;
      position.x += Math.max(-12, Math.min(12, force.x)) * cooling;
      position.y += Math.max(-12, Math.min(12, force.y)) * cooling;
      position.x = Math.max(20, Math.min(width - 20, position.x));
      position.y = Math.max(20, Math.min(height - 20, position.y));
    }
  }
  return positions;
}

// SVG rendering of a graph view model with kind-based coloring, selection,
// and warning styling for nonstandard edges.

import { computeLayout } from './layout.js';
import { GraphViewModel, propertiesOf, select } from './model.js';
import { StixBundle } from './types.js';

const KIND_COLORS: Record<string, string> = {
  grouping: '#7b1fa2',
  campaign: '#1565c0',
  'intrusion-set': '#c62828',
  'attack-pattern': '#ef6c00',
  malware: '#6d4c41',
  tool: '#00838f',
  vulnerability: '#9e9d24',
  'threat-actor': '#ad1457',
  identity: '#2e7d32',
  location: '#00695c',
  note: '#5e35b1',
  report: '#4527a0',
  'course-of-action': '#455a64',
  infrastructure: '#37474f',
  indicator: '#f9a825',
};

const SVG_NS = 'http://www.w3.org/2000/svg';

export class GraphView {
  private vm: GraphViewModel | null = null;
  private bundle: StixBundle | null = null;

  constructor(
    private readonly canvas: HTMLElement,
    private readonly panel: HTMLElement,
    private readonly status: HTMLElement,
  ) {}

  render(vm: GraphViewModel, bundle: StixBundle): void {
    this.vm = vm;
    this.bundle = bundle;
    this.canvas.textContent = '';
    if (!vm.nodes.length) {
      this.status.textContent = 'Empty bundle: nothing to draw yet. Draft or load an incident.';
      return;
    }
    this.status.textContent = `${vm.nodes.length} objects, ${vm.edges.length} relationships`;

    const width = this.canvas.clientWidth || 900;
    const height = Math.max(this.canvas.clientHeight || 520, 420);
    const positions = computeLayout(vm.nodes, vm.edges, width, height);

    const svg = document.createElementNS(SVG_NS, 'svg');
    svg.setAttribute('viewBox', `0 0 ${width} ${height}`);
    svg.setAttribute('width', '100%');
    svg.setAttribute('height', String(height));

    for (const edge of vm.edges) {
      const from = positions.get(edge.source)!;
      const to = positions.get(edge.target)!;
      const line = document.createElementNS(SVG_NS, 'line');
      line.setAttribute('x1', String(from.x));
      line.setAttribute('y1', String(from.y));
      line.setAttribute('x2', String(to.x));
      line.setAttribute('y2', String(to.y));
      line.setAttribute('stroke', edge.nonstandard ? '#d32f2f' : '#90a4ae');
      if (edge.nonstandard) {
        line.setAttribute('stroke-dasharray', '6 3');
        const title = document.createElementNS(SVG_NS, 'title');
        title.textContent = `${edge.relType} (nonstandard relationship)`;
        line.appendChild(title);
      }
      svg.appendChild(line);
      const label = document.createElementNS(SVG_NS, 'text');
      label.setAttribute('x', String((from.x + to.x) / 2));
      label.setAttribute('y', String((from.y + to.y) / 2 - 3));
      label.setAttribute('class', 'edge-label');
      label.textContent = edge.relType;
      svg.appendChild(label);
    }

    for (const node of vm.nodes) {
      const at = positions.get(node.id)!;
      const group = document.createElementNS(SVG_NS, 'g');
      group.setAttribute('class', 'node');
      const circle = document.createElementNS(SVG_NS, 'circle');
      circle.setAttribute('cx', String(at.x));
      circle.setAttribute('cy', String(at.y));
      circle.setAttribute('r', node.id === vm.selection ? '14' : '10');
      circle.setAttribute('fill', KIND_COLORS[node.kind] ?? '#78909c');
      circle.setAttribute('stroke', node.id === vm.selection ? '#000' : '#fff');
      circle.setAttribute('stroke-width', '2');
      group.appendChild(circle);
      const text = document.createElementNS(SVG_NS, 'text');
      text.setAttribute('x', String(at.x + 14));
      text.setAttribute('y', String(at.y + 4));
      text.textContent = node.label;
      group.appendChild(text);
      group.addEventListener('click', () => this.onSelect(node.id));
      svg.appendChild(group);
    }
    this.canvas.appendChild(svg);
  }

  renderError(message: string): void {
    this.canvas.textContent = '';
    this.status.textContent = `Could not render bundle: ${message}`;
  }

  private onSelect(id: string): void {
    if (!this.vm || !this.bundle) return;
    this.vm = select(this.vm, id);
    this.render(this.vm, this.bundle);
    this.panel.textContent = '';
    const heading = document.createElement('h3');
    heading.textContent = this.vm.nodes.find((n) => n.id === id)?.label ?? id;
    this.panel.appendChild(heading);
    const list = document.createElement('dl');
    for (const [key, value] of propertiesOf(this.bundle, id)) {
      const term = document.createElement('dt');
      term.textContent = key;
      const detail = document.createElement('dd');
      detail.textContent = value;
      list.appendChild(term);
      list.appendChild(detail);
    }
    this.panel.appendChild(list);
  }
}

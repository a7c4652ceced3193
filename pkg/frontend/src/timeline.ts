// Trajectory context panel: action labels across the top, one series row
// per state variable plus the reward below, grey vertical gridlines per
// timestep, and a shaded column over each flagged transition (strongest
// on the unit under review). Pure SVG so the panel is testable without
// a canvas implementation.

import { TransitionView } from "./api";
import { formatNumber } from "./format";

export interface VariableSpec {
  label: string;
  // shaded horizontal band marking the expected range; values outside
  // it should catch the eye the way the flagged column does
  normalRange?: [number, number];
}

export interface TimelineOptions {
  focusId: string;
  variables?: VariableSpec[];
  width?: number;
  rowHeight?: number;
}

const SVG_NS = "http://www.w3.org/2000/svg";

function svgEl<K extends keyof SVGElementTagNameMap>(
  tag: K,
  attrs: Record<string, string | number>,
): SVGElementTagNameMap[K] {
  const el = document.createElementNS(SVG_NS, tag);
  for (const [key, value] of Object.entries(attrs)) el.setAttribute(key, String(value));
  return el;
}

function seriesRow(
  parent: SVGElement,
  values: number[],
  xs: number[],
  y0: number,
  height: number,
  label: string,
  width: number,
  range?: [number, number],
): void {
  const pad = 6;
  const lo = Math.min(...values, ...(range ? [range[0]] : []));
  const hi = Math.max(...values, ...(range ? [range[1]] : []));
  const span = hi - lo || 1;
  const yOf = (v: number) => y0 + height - pad - ((v - lo) / span) * (height - 2 * pad);

  if (range) {
    parent.appendChild(
      svgEl("rect", {
        x: 0,
        y: yOf(range[1]),
        width,
        height: Math.max(yOf(range[0]) - yOf(range[1]), 1),
        class: "normal-band",
      }),
    );
  }
  const points = values.map((v, i) => `${xs[i]},${yOf(v)}`).join(" ");
  parent.appendChild(svgEl("polyline", { points, class: "series-line" }));
  values.forEach((v, i) => {
    const dot = svgEl("circle", { cx: xs[i], cy: yOf(v), r: 3, class: "series-dot" });
    dot.appendChild(
      Object.assign(document.createElementNS(SVG_NS, "title"), {
        textContent: formatNumber(v),
      }),
    );
    parent.appendChild(dot);
  });
  const text = svgEl("text", { x: 4, y: y0 + 12, class: "row-label" });
  text.textContent = label;
  parent.appendChild(text);
}

export function renderTimeline(
  container: HTMLElement,
  views: TransitionView[],
  options: TimelineOptions,
): void {
  container.textContent = "";
  if (views.length === 0) return;

  const stateDim = views[0].record.state.length;
  const variables: VariableSpec[] =
    options.variables ?? Array.from({ length: stateDim }, (_, i) => ({ label: `state[${i}]` }));
  const rowHeight = options.rowHeight ?? 44;
  const width = options.width ?? Math.max(views.length * 72, 360);
  const actionRow = 26;
  const height = actionRow + (variables.length + 1) * rowHeight;

  const svg = svgEl("svg", {
    width,
    height,
    viewBox: `0 0 ${width} ${height}`,
    class: "timeline",
    role: "img",
  });

  const colWidth = width / views.length;
  const xs = views.map((_, i) => (i + 0.5) * colWidth);

  // flagged-column shading first, so the series draw on top of it
  views.forEach((view, i) => {
    if (!view.flagged) return;
    const focused = view.record.id === options.focusId;
    svg.appendChild(
      svgEl("rect", {
        x: i * colWidth,
        y: 0,
        width: colWidth,
        height,
        class: focused ? "flag-shade focus" : "flag-shade",
        "data-unit": view.record.id,
      }),
    );
  });

  // grey vertical timestep lines
  views.forEach((_, i) => {
    svg.appendChild(
      svgEl("line", { x1: i * colWidth, y1: 0, x2: i * colWidth, y2: height, class: "gridline" }),
    );
  });

  // action labels across the top
  views.forEach((view, i) => {
    const text = svgEl("text", { x: xs[i], y: 17, class: "action-label", "text-anchor": "middle" });
    text.textContent = `a=${view.record.action}`;
    svg.appendChild(text);
  });

  variables.forEach((spec, v) => {
    seriesRow(
      svg,
      views.map((view) => view.record.state[v]),
      xs,
      actionRow + v * rowHeight,
      rowHeight,
      spec.label,
      width,
      spec.normalRange,
    );
  });
  seriesRow(
    svg,
    views.map((view) => view.record.reward),
    xs,
    actionRow + variables.length * rowHeight,
    rowHeight,
    "reward",
    width,
  );

  // step index footer inside the bottom row
  views.forEach((view, i) => {
    const text = svgEl("text", {
      x: xs[i],
      y: height - 4,
      class: "step-label",
      "text-anchor": "middle",
    });
    text.textContent = `t=${view.record.step_index}`;
    svg.appendChild(text);
  });

  container.appendChild(svg);
}

/** Minimal dependency-free SVG line-chart writer. */

export interface Series {
  label: string;
  x: number[];
  y: number[];
  color: string;
  dashed?: boolean;
}

export interface ChartOptions {
  title: string;
  xLabel: string;
  yLabel: string;
  width?: number;
  height?: number;
}

const MARGIN = { top: 42, right: 24, bottom: 48, left: 64 };

function niceTicks(lo: number, hi: number, count = 6): number[] {
  if (!(hi > lo)) return [lo];
  const span = hi - lo;
  const step = Math.pow(10, Math.floor(Math.log10(span / count)));
  const err = span / count / step;
  const factor = err >= 7.5 ? 10 : err >= 3.5 ? 5 : err >= 1.5 ? 2 : 1;
  const s = step * factor;
  const ticks: number[] = [];
  for (let v = Math.ceil(lo / s) * s; v <= hi + 1e-12 * span; v += s) {
    ticks.push(v);
  }
  return ticks;
}

function fmt(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e5 || a < 1e-3) return v.toExponential(1);
  return String(Number(v.toPrecision(5)));
}

const esc = (s: string) =>
  s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");

export function renderChart(series: Series[], opts: ChartOptions): string {
  const width = opts.width ?? 860;
  const height = opts.height ?? 520;
  const plotW = width - MARGIN.left - MARGIN.right;
  const plotH = height - MARGIN.top - MARGIN.bottom;

  const xs = series.flatMap((s) => s.x);
  const ys = series.flatMap((s) => s.y);
  if (xs.length === 0) {
    throw new Error("no data to plot");
  }
  const xLo = Math.min(...xs);
  const xHi = Math.max(...xs);
  const yLo = Math.min(...ys);
  const yHi = Math.max(...ys);
  const xPad = xHi > xLo ? 0 : 0.5;
  const yPad = yHi > yLo ? (yHi - yLo) * 0.05 : 0.5;

  const sx = (v: number) =>
    MARGIN.left + ((v - xLo + xPad * 0) / (xHi - xLo || 1)) * plotW;
  const sy = (v: number) =>
    MARGIN.top + plotH - ((v - (yLo - yPad)) / (yHi + yPad - (yLo - yPad))) * plotH;

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
      `viewBox="0 0 ${width} ${height}" font-family="sans-serif" font-size="12">`,
  );
  parts.push(`<rect width="${width}" height="${height}" fill="white"/>`);
  parts.push(
    `<text x="${width / 2}" y="24" text-anchor="middle" font-size="15">` +
      `${esc(opts.title)}</text>`,
  );

  for (const t of niceTicks(xLo, xHi)) {
    const x = sx(t);
    parts.push(
      `<line x1="${x}" y1="${MARGIN.top}" x2="${x}" y2="${MARGIN.top + plotH}" ` +
        `stroke="#ddd"/>`,
      `<text x="${x}" y="${MARGIN.top + plotH + 18}" text-anchor="middle">${fmt(t)}</text>`,
    );
  }
  for (const t of niceTicks(yLo - yPad, yHi + yPad)) {
    const y = sy(t);
    parts.push(
      `<line x1="${MARGIN.left}" y1="${y}" x2="${MARGIN.left + plotW}" y2="${y}" ` +
        `stroke="#ddd"/>`,
      `<text x="${MARGIN.left - 8}" y="${y + 4}" text-anchor="end">${fmt(t)}</text>`,
    );
  }
  parts.push(
    `<rect x="${MARGIN.left}" y="${MARGIN.top}" width="${plotW}" height="${plotH}" ` +
      `fill="none" stroke="#333"/>`,
    `<text x="${MARGIN.left + plotW / 2}" y="${height - 10}" text-anchor="middle">` +
      `${esc(opts.xLabel)}</text>`,
    `<text transform="translate(16 ${MARGIN.top + plotH / 2}) rotate(-90)" ` +
      `text-anchor="middle">${esc(opts.yLabel)}</text>`,
  );

  for (const s of series) {
    const pts = s.x.map((v, i) => `${sx(v).toFixed(2)},${sy(s.y[i]).toFixed(2)}`);
    const dash = s.dashed ? ` stroke-dasharray="6 4"` : "";
    parts.push(
      `<polyline fill="none" stroke="${s.color}" stroke-width="1.8"${dash} ` +
        `points="${pts.join(" ")}"/>`,
    );
  }

  // Legend in the upper-right corner of the plot area.
  series.forEach((s, i) => {
    const y = MARGIN.top + 16 + i * 18;
    const x = MARGIN.left + plotW - 190;
    const dash = s.dashed ? ` stroke-dasharray="6 4"` : "";
    parts.push(
      `<line x1="${x}" y1="${y - 4}" x2="${x + 26}" y2="${y - 4}" ` +
        `stroke="${s.color}" stroke-width="1.8"${dash}/>`,
      `<text x="${x + 32}" y="${y}">${esc(s.label)}</text>`,
    );
  });

  parts.push("</svg>");
  return parts.join("\n");
}

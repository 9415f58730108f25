/**
 * Figure assembly: map a run directory's repeat-averaged cells onto one of
 * the three standard x-axes and render an SVG chart.
 */

import { AveragedCell, averageByCell, loadRunDirectory } from "./csv.js";
import { smooth } from "./smooth.js";
import { renderChart, Series } from "./svg.js";

export type XAxis = "steps" | "samples" | "unit_energy";

export interface FigureSpec {
  xAxis: XAxis;
  /** Cells to overlay as "schedule/sensing"; empty means all cells. */
  cells: string[];
  smoothing: boolean;
  smoothWindow: number;
  outPath: string;
}

export const DEFAULT_SPEC: Omit<FigureSpec, "outPath" | "xAxis"> = {
  cells: [],
  smoothing: true,
  smoothWindow: 100,
};

const AXIS_LABEL: Record<XAxis, string> = {
  steps: "training rounds",
  samples: "cumulative raw samples",
  unit_energy: "cumulative unit energy",
};

const PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

export function xValues(cell: AveragedCell, axis: XAxis): number[] {
  switch (axis) {
    case "steps":
      return cell.rounds;
    case "samples":
      return cell.cumulativeRawSamples;
    case "unit_energy":
      return cell.cumulativeUnitEnergy;
  }
}

export function buildSeries(cells: AveragedCell[], spec: Pick<FigureSpec, "xAxis" | "cells" | "smoothing" | "smoothWindow">): Series[] {
  const wanted =
    spec.cells.length === 0
      ? cells
      : cells.filter((c) => spec.cells.includes(`${c.schedule}/${c.sensing}`));
  if (wanted.length === 0) {
    throw new Error(
      `no matching cells; available: ${cells
        .map((c) => `${c.schedule}/${c.sensing}`)
        .join(", ")}`,
    );
  }
  return wanted.map((cell, i) => ({
    label: `${cell.schedule}/${cell.sensing} (n=${cell.repeats})`,
    x: xValues(cell, spec.xAxis),
    y: spec.smoothing
      ? smooth(cell.validationLoss, spec.smoothWindow)
      : [...cell.validationLoss],
    color: PALETTE[i % PALETTE.length],
    dashed: cell.sensing === "reweight",
  }));
}

export function renderFigure(runDir: string, spec: FigureSpec): string {
  const cells = averageByCell(loadRunDirectory(runDir));
  const series = buildSeries(cells, spec);
  return renderChart(series, {
    title: `validation loss vs ${AXIS_LABEL[spec.xAxis]}`,
    xLabel: AXIS_LABEL[spec.xAxis],
    yLabel: spec.smoothing
      ? `validation loss (smoothed, window ${spec.smoothWindow})`
      : "validation loss",
  });
}

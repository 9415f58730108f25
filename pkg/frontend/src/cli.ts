/**
 * Figure renderer CLI: one SVG per invocation.
 *
 *   node dist/cli.js --run-dir out --x steps --out fig_steps.svg
 *   node dist/cli.js --run-dir out --x unit_energy --cells proposed/baseline,vanilla/baseline --no-smooth --out fig.svg
 */

import { writeFileSync } from "fs";
import { DEFAULT_SPEC, FigureSpec, renderFigure, XAxis } from "./figures.js";

function usage(): never {
  console.error(
    "usage: cli --run-dir DIR --x steps|samples|unit_energy --out FILE.svg " +
      "[--cells a/b,c/d] [--no-smooth] [--window N]",
  );
  process.exit(2);
}

export function parseArgs(argv: string[]): { runDir: string; spec: FigureSpec } {
  let runDir = "";
  let xAxis: XAxis | "" = "";
  let outPath = "";
  let cells: string[] = [];
  let smoothing = DEFAULT_SPEC.smoothing;
  let smoothWindow = DEFAULT_SPEC.smoothWindow;

  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    const next = () => {
      if (i + 1 >= argv.length) usage();
      return argv[++i];
    };
    switch (arg) {
      case "--run-dir":
        runDir = next();
        break;
      case "--x": {
        const v = next();
        if (v !== "steps" && v !== "samples" && v !== "unit_energy") usage();
        xAxis = v;
        break;
      }
      case "--out":
        outPath = next();
        break;
      case "--cells":
        cells = next().split(",").filter((c) => c.length > 0);
        break;
      case "--no-smooth":
        smoothing = false;
        break;
      case "--window":
        smoothWindow = Number(next());
        if (!Number.isInteger(smoothWindow) || smoothWindow < 1) usage();
        break;
      default:
        usage();
    }
  }
  if (!runDir || !xAxis || !outPath) usage();
  return { runDir, spec: { xAxis, cells, smoothing, smoothWindow, outPath } };
}

export function main(argv: string[]): number {
  const { runDir, spec } = parseArgs(argv);
  const svg = renderFigure(runDir, spec);
  writeFileSync(spec.outPath, svg);
  console.log(`wrote ${spec.outPath}`);
  return 0;
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  try {
    process.exit(main(process.argv.slice(2)));
  } catch (err) {
    console.error(String(err instanceof Error ? err.message : err));
    process.exit(1);
  }
}

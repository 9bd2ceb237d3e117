/**
 * Minimal SVG figure assembly: scales, ticks, polylines, bars, legend.
 *
 * Everything is deterministic string concatenation; the same inputs always
 * produce byte-identical SVG.
 */

export const WIDTH = 720;
export const HEIGHT = 480;
export const MARGIN = { top: 40, right: 170, bottom: 56, left: 72 };

export const PALETTE = [
  "#1f77b4",
  "#d62728",
  "#2ca02c",
  "#9467bd",
  "#ff7f0e",
  "#8c564b",
  "#17becf",
  "#7f7f7f",
];

export interface Scale {
  map(value: number): number;
  ticks(): number[];
}

function niceStep(span: number, target: number): number {
  const raw = span / target;
  const mag = Math.pow(10, Math.floor(Math.log10(raw)));
  for (const mult of [1, 2, 5, 10]) {
    if (mag * mult >= raw) {
      return mag * mult;
    }
  }
  return mag * 10;
}

export function linearScale(
  lo: number,
  hi: number,
  rangeLo: number,
  rangeHi: number,
): Scale {
  if (hi === lo) {
    // degenerate domain: widen so the single value sits mid-range
    lo -= 0.5;
    hi += 0.5;
  }
  const step = niceStep(hi - lo, 5);
  return {
    map: (v) => rangeLo + ((v - lo) / (hi - lo)) * (rangeHi - rangeLo),
    ticks: () => {
      const out: number[] = [];
      for (let t = Math.ceil(lo / step) * step; t <= hi + 1e-9 * step; t += step) {
        out.push(Math.abs(t) < 1e-12 * step ? 0 : t);
      }
      return out;
    },
  };
}

export function logScale(
  lo: number,
  hi: number,
  rangeLo: number,
  rangeHi: number,
): Scale {
  if (lo <= 0) {
    throw new RangeError(`log scale requires positive domain, got [${lo}, ${hi}]`);
  }
  if (hi === lo) {
    lo /= 2;
    hi *= 2;
  }
  const llo = Math.log10(lo);
  const lhi = Math.log10(hi);
  return {
    map: (v) => rangeLo + ((Math.log10(v) - llo) / (lhi - llo)) * (rangeHi - rangeLo),
    ticks: () => {
      const out: number[] = [];
      const first = Math.ceil(llo - 1e-9);
      const last = Math.floor(lhi + 1e-9);
      for (let e = first; e <= last; e++) {
        out.push(Math.pow(10, e));
      }
      // fewer than two decades: fill in 2x and 5x minor ticks
      if (out.length < 2) {
        for (let e = Math.floor(llo); e <= last; e++) {
          for (const m of [2, 5]) {
            const v = m * Math.pow(10, e);
            if (v >= lo && v <= hi) {
              out.push(v);
            }
          }
        }
        out.sort((a, b) => a - b);
      }
      return out;
    },
  };
}

export function formatTick(value: number): string {
  if (value !== 0 && (Math.abs(value) >= 1e6 || Math.abs(value) < 1e-3)) {
    const exp = Math.floor(Math.log10(Math.abs(value)));
    const mant = value / Math.pow(10, exp);
    const m = Number(mant.toPrecision(3));
    return m === 1 ? `1e${exp}` : `${m}e${exp}`;
  }
  return Number(value.toPrecision(4)).toString();
}

export function escapeXml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

export interface SeriesGeom {
  label: string;
  points: Array<[number, number]>;
}

export interface BarGeom {
  x: number;
  y: number;
  width: number;
  height: number;
}

export interface FigureParts {
  title: string;
  xLabel: string;
  yLabel: string;
  xScale: Scale;
  yScale: Scale;
  series?: SeriesGeom[];
  bars?: BarGeom[];
  /** x-positions for dashed vertical reference lines, in data units. */
  xMarkers?: number[];
}

const plotLeft = MARGIN.left;
const plotRight = WIDTH - MARGIN.right;
const plotTop = MARGIN.top;
const plotBottom = HEIGHT - MARGIN.bottom;

export const PLOT_AREA = {
  left: plotLeft,
  right: plotRight,
  top: plotTop,
  bottom: plotBottom,
};

function fmtCoord(v: number): string {
  return Number(v.toFixed(2)).toString();
}

export function assemble(parts: FigureParts): string {
  const out: string[] = [];
  out.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${WIDTH}" height="${HEIGHT}" ` +
      `viewBox="0 0 ${WIDTH} ${HEIGHT}" font-family="sans-serif" font-size="12">`,
  );
  out.push(`<rect width="${WIDTH}" height="${HEIGHT}" fill="white"/>`);
  out.push(
    `<text x="${(plotLeft + plotRight) / 2}" y="${plotTop - 16}" ` +
      `text-anchor="middle" font-size="15">${escapeXml(parts.title)}</text>`,
  );

  // axes and grid
  for (const t of parts.xScale.ticks()) {
    const x = fmtCoord(parts.xScale.map(t));
    out.push(
      `<line x1="${x}" y1="${plotTop}" x2="${x}" y2="${plotBottom}" stroke="#dddddd"/>`,
    );
    out.push(
      `<text x="${x}" y="${plotBottom + 18}" text-anchor="middle">` +
        `${escapeXml(formatTick(t))}</text>`,
    );
  }
  for (const t of parts.yScale.ticks()) {
    const y = fmtCoord(parts.yScale.map(t));
    out.push(
      `<line x1="${plotLeft}" y1="${y}" x2="${plotRight}" y2="${y}" stroke="#dddddd"/>`,
    );
    out.push(
      `<text x="${plotLeft - 8}" y="${y}" text-anchor="end" dominant-baseline="middle">` +
        `${escapeXml(formatTick(t))}</text>`,
    );
  }
  out.push(
    `<rect x="${plotLeft}" y="${plotTop}" width="${plotRight - plotLeft}" ` +
      `height="${plotBottom - plotTop}" fill="none" stroke="#333333"/>`,
  );
  out.push(
    `<text x="${(plotLeft + plotRight) / 2}" y="${HEIGHT - 14}" ` +
      `text-anchor="middle">${escapeXml(parts.xLabel)}</text>`,
  );
  out.push(
    `<text x="18" y="${(plotTop + plotBottom) / 2}" text-anchor="middle" ` +
      `transform="rotate(-90 18 ${(plotTop + plotBottom) / 2})">` +
      `${escapeXml(parts.yLabel)}</text>`,
  );

  for (const marker of parts.xMarkers ?? []) {
    const x = fmtCoord(parts.xScale.map(marker));
    out.push(
      `<line x1="${x}" y1="${plotTop}" x2="${x}" y2="${plotBottom}" ` +
        `stroke="#555555" stroke-dasharray="4 3"/>`,
    );
  }

  for (const bar of parts.bars ?? []) {
    out.push(
      `<rect x="${fmtCoord(bar.x)}" y="${fmtCoord(bar.y)}" ` +
        `width="${fmtCoord(bar.width)}" height="${fmtCoord(bar.height)}" ` +
        `fill="${PALETTE[0]}" stroke="white"/>`,
    );
  }

  const series = parts.series ?? [];
  series.forEach((s, i) => {
    const color = PALETTE[i % PALETTE.length] as string;
    const pts = s.points
      .map(([x, y]) => `${fmtCoord(parts.xScale.map(x))},${fmtCoord(parts.yScale.map(y))}`)
      .join(" ");
    out.push(
      `<polyline points="${pts}" fill="none" stroke="${color}" stroke-width="1.8"/>`,
    );
    for (const [x, y] of s.points) {
      out.push(
        `<circle cx="${fmtCoord(parts.xScale.map(x))}" cy="${fmtCoord(parts.yScale.map(y))}" ` +
          `r="2.4" fill="${color}"/>`,
      );
    }
    const ly = plotTop + 10 + i * 18;
    out.push(
      `<line x1="${plotRight + 10}" y1="${ly}" x2="${plotRight + 34}" y2="${ly}" ` +
        `stroke="${color}" stroke-width="1.8"/>`,
    );
    out.push(
      `<text x="${plotRight + 40}" y="${ly}" dominant-baseline="middle">` +
        `${escapeXml(s.label)}</text>`,
    );
  });

  out.push("</svg>");
  return out.join("\n") + "\n";
}

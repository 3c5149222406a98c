/**
 * Page-level text analysis: group pdfjs text items into lines, detect
 * column-aligned runs as tables, label oversized lines as layout text,
 * and join the rest into paragraph segments.
 */

import { serializeTable } from "./tableSerialize.js";
import type { SegmentJson } from "./types.js";

export interface TextItem {
  str: string;
  x: number;
  y: number;
  size: number;
}

interface Line {
  y: number;
  size: number;
  items: TextItem[];
}

const SAME_LINE_TOLERANCE = 2.0; // pt
const COLUMN_TOLERANCE = 3.0; // pt
const HEADING_SIZE_RATIO = 1.15;
const PARAGRAPH_GAP_RATIO = 1.6;

export function groupLines(items: TextItem[]): Line[] {
  const kept = items.filter((it) => it.str.trim().length > 0);
  const lines: Line[] = [];
  // PDF y grows upward; read top-down, left-to-right.
  const sorted = [...kept].sort((a, b) => b.y - a.y || a.x - b.x);
  for (const item of sorted) {
    const line = lines.find((l) => Math.abs(l.y - item.y) <= SAME_LINE_TOLERANCE);
    if (line) {
      line.items.push(item);
      line.size = Math.max(line.size, item.size);
    } else {
      lines.push({ y: item.y, size: item.size, items: [item] });
    }
  }
  for (const line of lines) line.items.sort((a, b) => a.x - b.x);
  return lines;
}

function median(values: number[]): number {
  if (values.length === 0) return 0;
  const sorted = [...values].sort((a, b) => a - b);
  return sorted[Math.floor(sorted.length / 2)];
}

function columnsOf(line: Line): number[] {
  return line.items.map((it) => it.x);
}

function matchesColumns(line: Line, columns: number[]): boolean {
  if (line.items.length < 2) return false;
  return line.items.every((it) =>
    columns.some((c) => Math.abs(c - it.x) <= COLUMN_TOLERANCE)
  );
}

function toRow(line: Line, columns: number[]): string[] {
  const row = columns.map(() => "");
  for (const item of line.items) {
    let best = 0;
    for (let c = 1; c < columns.length; c++) {
      if (Math.abs(columns[c] - item.x) < Math.abs(columns[best] - item.x)) best = c;
    }
    row[best] = row[best] ? `${row[best]} ${item.str}` : item.str;
  }
  return row;
}

/**
 * Turn one page's text items into ordered segments. A run of two or more
 * consecutive lines sharing at least two x-anchored columns becomes one
 * Table segment; lines noticeably larger than body text become
 * LayoutText; everything else accumulates into PureText paragraphs.
 */
export function segmentPage(items: TextItem[]): SegmentJson[] {
  const lines = groupLines(items);
  if (lines.length === 0) return [];
  const bodySize = median(lines.map((l) => l.size));

  const segments: SegmentJson[] = [];
  let paragraph: string[] = [];
  let lastParagraphLine: Line | null = null;

  const flushParagraph = () => {
    if (paragraph.length > 0) {
      segments.push({ kind: "PureText", text: paragraph.join(" "), linked_asset: null });
      paragraph = [];
      lastParagraphLine = null;
    }
  };

  let i = 0;
  while (i < lines.length) {
    const line = lines[i];

    // Table run: the first multi-item line anchors the column grid.
    if (line.items.length >= 2) {
      const columns = columnsOf(line);
      let end = i + 1;
      while (end < lines.length && matchesColumns(lines[end], columns)) end++;
      if (end - i >= 2) {
        flushParagraph();
        const grid = lines.slice(i, end).map((l) => toRow(l, columns));
        segments.push({ kind: "Table", text: serializeTable(grid), linked_asset: null });
        i = end;
        continue;
      }
    }

    const text = line.items.map((it) => it.str).join(" ");
    if (line.size >= bodySize * HEADING_SIZE_RATIO) {
      flushParagraph();
      segments.push({ kind: "LayoutText", text, linked_asset: null });
    } else {
      const gap = lastParagraphLine ? lastParagraphLine.y - line.y : 0;
      if (lastParagraphLine && gap > line.size * PARAGRAPH_GAP_RATIO) flushParagraph();
      paragraph.push(text);
      lastParagraphLine = line;
    }
    i++;
  }
  flushParagraph();
  return segments;
}

/** Fixture PDFs built with pdf-lib: one text-only, one with table+figure. */

import * as fs from "node:fs";
import * as path from "node:path";

import { PDFDocument, StandardFonts } from "pdf-lib";

import { encodePng, RasterKind } from "../src/png.js";

export const TABLE_GRID = [
  ["metric", "q1", "q2"],
  ["revenue", "10", "12"],
  ["costs", "7", "8"],
];

export function checkerPng(): Buffer {
  const size = 8;
  const rgba = Buffer.alloc(size * size * 4);
  for (let y = 0; y < size; y++) {
    for (let x = 0; x < size; x++) {
      const red = (x + y) % 2 === 0;
      const i = (y * size + x) * 4;
      rgba[i] = red ? 220 : 30;
      rgba[i + 1] = 40;
      rgba[i + 2] = red ? 30 : 220;
      rgba[i + 3] = 255;
    }
  }
  return encodePng(size, size, rgba, RasterKind.Rgba32);
}

async function newPdf(): Promise<PDFDocument> {
  const pdf = await PDFDocument.create();
  pdf.setCreationDate(new Date(0));
  pdf.setModificationDate(new Date(0));
  return pdf;
}

export async function writeTextOnlyPdf(dir: string): Promise<string> {
  const pdf = await newPdf();
  const font = await pdf.embedFont(StandardFonts.Helvetica);
  const bold = await pdf.embedFont(StandardFonts.HelveticaBold);
  const bodies = [
    "The northern valley stays cool through summer. Streams from the ridge feed two small lakes.",
    "Trail crews clear the lower paths in spring. The upper traverse opens after the snow melts.",
    "Most visitors arrive in early autumn. The larches turn gold in the last week of September.",
  ];
  for (let i = 0; i < 3; i++) {
    const page = pdf.addPage([400, 300]);
    page.drawText(`Section ${i + 1}`, { x: 40, y: 260, size: 18, font: bold });
    page.drawText(bodies[i], { x: 40, y: 230, size: 11, font, lineHeight: 14, maxWidth: 320 });
    page.drawText("A short closing remark ends the section.", { x: 40, y: 160, size: 11, font });
  }
  const target = path.join(dir, "text-only.pdf");
  fs.writeFileSync(target, await pdf.save({ useObjectStreams: false }));
  return target;
}

export async function writeRichPdf(dir: string): Promise<string> {
  const pdf = await newPdf();
  pdf.setTitle("Quarterly Summary");
  const font = await pdf.embedFont(StandardFonts.Helvetica);
  const bold = await pdf.embedFont(StandardFonts.HelveticaBold);
  const page = pdf.addPage([400, 360]);
  page.drawText("Quarterly Summary", { x: 40, y: 320, size: 18, font: bold });
  page.drawText("Figures below are in millions of euros.", { x: 40, y: 290, size: 11, font });

  const cols = [40, 160, 260];
  TABLE_GRID.forEach((row, r) => {
    row.forEach((cell, c) => {
      page.drawText(cell, { x: cols[c], y: 250 - r * 16, size: 11, font });
    });
  });

  const figure = await pdf.embedPng(checkerPng());
  page.drawImage(figure, { x: 40, y: 80, width: 64, height: 64 });
  page.drawText("Chart: revenue versus costs.", { x: 40, y: 60, size: 11, font });

  const target = path.join(dir, "rich-report.pdf");
  fs.writeFileSync(target, await pdf.save({ useObjectStreams: false }));
  return target;
}

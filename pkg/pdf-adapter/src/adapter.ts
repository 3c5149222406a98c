/**
 * PDF to canonical document JSON. Everything is assembled in memory and
 * written only after the whole file parsed cleanly, so a parse failure
 * leaves no partial output behind. Output is deterministic: re-running
 * on the same PDF yields byte-identical JSON and images.
 */

import "./compat.js";

import { createRequire } from "node:module";
import * as fs from "node:fs";
import * as path from "node:path";

import { getDocument, OPS } from "pdfjs-dist/legacy/build/pdf.mjs";

import { segmentPage, type TextItem } from "./extract.js";
import { encodePng, RasterKind } from "./png.js";
import {
  DOCUMENT_FORMAT_VERSION,
  ParseError,
  type AdapterConfig,
  type AssetJson,
  type DocumentJson,
  type PageJson,
} from "./types.js";

export interface AdapterResult {
  documentPath: string;
  imagePaths: string[];
}

// Metrics for the 14 standard PDF fonts; required for full evaluation in Node.
const STANDARD_FONTS_DIR =
  path.join(
    path.dirname(createRequire(import.meta.url).resolve("pdfjs-dist/package.json")),
    "standard_fonts"
  ) + path.sep;

export function docIdFromPath(inputPath: string): string {
  const stem = path.basename(inputPath).replace(/\.pdf$/i, "");
  const cleaned = stem.replace(/[^A-Za-z0-9_-]+/g, "-").replace(/^-+|-+$/g, "");
  return cleaned || "document";
}

interface PendingImage {
  relPath: string;
  bytes: Buffer;
}

async function extractPageImages(
  page: any,
  docId: string,
  pageNo: number
): Promise<{ assets: AssetJson[]; images: PendingImage[] }> {
  const ops = await page.getOperatorList();
  const names: string[] = [];
  for (let i = 0; i < ops.fnArray.length; i++) {
    if (ops.fnArray[i] === OPS.paintImageXObject) {
      const name = ops.argsArray[i][0] as string;
      if (!names.includes(name)) names.push(name);
    }
  }
  const assets: AssetJson[] = [];
  const images: PendingImage[] = [];
  for (let i = 0; i < names.length; i++) {
    const raster: any = await new Promise((resolve) => page.objs.get(names[i], resolve));
    if (!raster || !raster.data) continue;
    const kind = (raster.kind ?? RasterKind.Rgb24) as RasterKind;
    const png = encodePng(raster.width, raster.height, raster.data, kind);
    const assetId = `p${pageNo}img${i + 1}`;
    const relPath = path.join("images", `${docId}-${assetId}.png`);
    assets.push({
      asset_id: assetId,
      page_no: pageNo,
      image_ref: relPath,
      media_type: "image/png",
    });
    images.push({ relPath, bytes: png });
  }
  return { assets, images };
}

export async function parsePdf(config: AdapterConfig): Promise<AdapterResult> {
  if (!fs.existsSync(config.inputPath)) {
    throw new ParseError(`input PDF not found: ${config.inputPath}`);
  }
  const docId = docIdFromPath(config.inputPath);
  const data = new Uint8Array(fs.readFileSync(config.inputPath));

  const task = getDocument({ data, verbosity: 0, standardFontDataUrl: STANDARD_FONTS_DIR });
  let pdf: any;
  try {
    pdf = await task.promise;
  } catch (err) {
    throw new ParseError(`cannot parse ${config.inputPath}: ${(err as Error).message}`);
  }

  try {
    if (pdf.numPages < 1) {
      throw new ParseError(`${config.inputPath} has no pages`);
    }

    let title: string | null = null;
    try {
      const meta = await pdf.getMetadata();
      const raw = meta?.info?.Title;
      if (typeof raw === "string" && raw.trim()) title = raw.trim();
    } catch {
      title = null;
    }

    const pages: PageJson[] = [];
    const pendingImages: PendingImage[] = [];
    for (let pageNo = 1; pageNo <= pdf.numPages; pageNo++) {
      let page: any;
      let items: TextItem[];
      let assets: AssetJson[] = [];
      try {
        page = await pdf.getPage(pageNo);
        if (config.extractImages) {
          const extracted = await extractPageImages(page, docId, pageNo);
          assets = extracted.assets;
          pendingImages.push(...extracted.images);
        }
        const content = await page.getTextContent();
        items = content.items
          .filter((it: any) => typeof it.str === "string")
          .map((it: any) => ({
            str: it.str,
            x: it.transform[4],
            y: it.transform[5],
            size: it.height || Math.abs(it.transform[3]),
          }));
      } catch (err) {
        throw new ParseError(`page ${pageNo} of ${config.inputPath}: ${(err as Error).message}`);
      }

      const segments = segmentPage(items);
      pages.push({ page_no: pageNo, segments, assets });
    }

    const document: DocumentJson = {
      version: DOCUMENT_FORMAT_VERSION,
      doc_id: docId,
      title,
      pages,
    };

    // All parsing succeeded; only now touch the filesystem.
    fs.mkdirSync(config.outputDir, { recursive: true });
    const imagePaths: string[] = [];
    if (pendingImages.length > 0) {
      fs.mkdirSync(path.join(config.outputDir, "images"), { recursive: true });
      for (const img of pendingImages) {
        const target = path.join(config.outputDir, img.relPath);
        fs.writeFileSync(target, img.bytes);
        imagePaths.push(target);
      }
    }
    const documentPath = path.join(config.outputDir, `${docId}.json`);
    fs.writeFileSync(documentPath, JSON.stringify(document, null, 2) + "\n", "utf-8");
    return { documentPath, imagePaths };
  } finally {
    await task.destroy();
  }
}

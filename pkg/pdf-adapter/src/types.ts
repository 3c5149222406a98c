/** Shapes of the canonical document JSON (format version mmdoc/1). */

export const DOCUMENT_FORMAT_VERSION = "mmdoc/1";

export type SegmentKind = "PureText" | "Table" | "LayoutText" | "ImageDescription";

export interface SegmentJson {
  kind: SegmentKind;
  text: string;
  linked_asset: string | null;
}

export interface AssetJson {
  asset_id: string;
  page_no: number;
  image_ref: string;
  media_type: string;
}

export interface PageJson {
  page_no: number;
  segments: SegmentJson[];
  assets: AssetJson[];
}

export interface DocumentJson {
  version: string;
  doc_id: string;
  title: string | null;
  pages: PageJson[];
}

export interface AdapterConfig {
  inputPath: string;
  outputDir: string;
  extractImages: boolean;
}

export class ParseError extends Error {}

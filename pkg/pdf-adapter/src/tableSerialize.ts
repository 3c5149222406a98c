/**
 * Fixed table serialization: header row first, then one line per row,
 * cells joined by " | ". Ragged rows are padded with empty cells so the
 * cell count round-trips.
 */

export function serializeTable(grid: string[][]): string {
  if (grid.length === 0) return "";
  const width = Math.max(...grid.map((row) => row.length));
  return grid
    .map((row) => {
      const padded = [...row];
      while (padded.length < width) padded.push("");
      return padded.join(" | ");
    })
    .join("\n");
}

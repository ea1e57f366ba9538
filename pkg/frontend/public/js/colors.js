/**
 * Deterministic chunk coloring: a chunk's hue is fixed by its position in
 * the reranked list, so repeated queries stay visually stable.
 */
const PALETTE = [
    "#4e79a7",
    "#f28e2b",
    "#59a14f",
    "#e15759",
    "#b07aa1",
    "#76b7b2",
    "#edc948",
    "#ff9da7",
    "#9c755f",
    "#bab0ac",
];
export const NO_SOURCE_COLOR = "#9e9e9e";
export function colorForRank(position) {
    if (position < 0) {
        return NO_SOURCE_COLOR;
    }
    return PALETTE[position % PALETTE.length];
}
export function colorMap(rerankedIds) {
    const map = new Map();
    rerankedIds.forEach((chunkId, position) => {
        map.set(chunkId, colorForRank(position));
    });
    return map;
}

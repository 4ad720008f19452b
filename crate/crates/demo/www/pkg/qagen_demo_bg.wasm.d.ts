/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const dedup_explorer: (a: number, b: number, c: number, d: number, e: number) => [number, number];
export const pair_overlap: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
export const simulate_generation: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number];
export const train_toy_retrieval: (a: number, b: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;

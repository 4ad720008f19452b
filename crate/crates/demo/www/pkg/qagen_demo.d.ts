/* tslint:disable */
/* eslint-disable */

/**
 * Near-duplicate filtering of newline-separated questions.
 */
export function dedup_explorer(questions: string, threshold: number, overlap_mode: string): string;

/**
 * Overlap score of a single pair, for the explorer's hover readout.
 */
export function pair_overlap(a: string, b: string, overlap_mode: string): string;

/**
 * Runs the style-by-topic generator with the offline mock over pasted text
 * and reports the raw count, what survives dedup, and topic coverage.
 */
export function simulate_generation(text: string, k: number, n_samples: number, duplicate_rate: number, seed: bigint): string;

/**
 * Trains the adapter on the synthetic rotated corpus and reports top-k
 * before and after, plus the per-epoch loss.
 */
export function train_toy_retrieval(request: string): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly dedup_explorer: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly pair_overlap: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
    readonly simulate_generation: (a: number, b: number, c: number, d: number, e: number, f: bigint) => [number, number];
    readonly train_toy_retrieval: (a: number, b: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;

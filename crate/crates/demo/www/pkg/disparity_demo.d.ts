/* tslint:disable */
/* eslint-disable */

/**
 * Loss along each branch as a function of the shift size.
 */
export function branch_curves(delta: number, alpha: number, logit_o0: number, a: number, points: number): string;

/**
 * Optimal single-node branch for a scenario.
 */
export function optimum(delta: number, alpha: number, logit_o0: number, a: number): string;

/**
 * Fit the heads on generated data, then train one disparity unit from the given start.
 */
export function train_unit(w_head: number, w_s: number, bias: number, epochs: number, lr: number, seed: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly branch_curves: (a: number, b: number, c: number, d: number, e: number) => [number, number, number, number];
    readonly optimum: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly train_unit: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_table_dealloc: (a: number) => void;
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

/* tslint:disable */
/* eslint-disable */

/**
 * Survival of the auxiliary diffusion over `[0, T]` for the two-asset
 * volatility-stabilised market started at `(x1, x2)`, by Monte Carlo, next to
 * the PDE value of `U` at the same times.
 *
 * Layout: `k` records of `[t, p_mc, stderr, U_pde]`.
 */
export function exit_curve(zeta: number, x1: number, x2: number, horizon: number, paths: number, seed: number): Float64Array;

/**
 * Single exit-probability estimate `[value, stderr]`.
 */
export function exit_probability(zeta: number, x1: number, x2: number, horizon: number, paths: number, seed: number): Float64Array;

/**
 * Fichera drifts `f_i` and `f̂_i` on the face `{x_i = 0}` (face is 1-based)
 * of the `n`-asset volatility-stabilised market, at `samples` points.
 *
 * Layout: rows of `[Σx, f_i, f̂_i]`, sorted by `Σx`.
 */
export function fichera_face(zeta: number, n: number, face: number, samples: number): Float64Array;

/**
 * `Q(T, m)` for the two-asset volatility-stabilised market on `points`
 * evenly spaced weights `m` in `(0, 1)`.
 *
 * Layout: `[m_0..m_{k-1}, Q_0..Q_{k-1}]`.
 */
export function weight_curve(zeta: number, horizon: number, points: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly exit_curve: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly exit_probability: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number, number, number];
    readonly fichera_face: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly weight_curve: (a: number, b: number, c: number) => [number, number, number, number];
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

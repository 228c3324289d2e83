/* tslint:disable */
/* eslint-disable */

/**
 * Row-major images of equal size, the source first.
 */
export class Gallery {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    count(): number;
    /**
     * One line per image naming the transforms applied.
     */
    descriptions(): string;
    height(): number;
    pixels(): Float64Array;
    width(): number;
}

/**
 * Parameter paths of both meta-learners, `meta_steps + 1` points each.
 */
export class MetaPaths {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    bootstrapped(): Float64Array;
    /**
     * KL to the bootstrap target before each bootstrapped step.
     */
    kl(): Float64Array;
    standard(): Float64Array;
}

export class Spectrum {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Eigenvalue `d` ties eigenvalue `d + 1`, so the top-`d` subspace is not unique.
     */
    degenerate(): boolean;
    eigen_gap(): number;
    /**
     * Transition-matrix eigenvalues, descending.
     */
    eigenvalues(): Float64Array;
    /**
     * No random subspace beat the eigen-subspace by more than 1e-9.
     */
    optimal(): boolean;
    random_gaps(): Float64Array;
}

/**
 * Source image of latent class `class` followed by `count` augmented views.
 */
export function augment_gallery(_class: number, level: string, count: number, seed: bigint): Gallery;

/**
 * Spectrum and minimax gaps of a random positive-pair chain.
 */
export function chain_spectrum(views: number, sources: number, d: number, samples: number, seed: bigint): Spectrum;

/**
 * Standard and bootstrapped meta-training on `(w - c)^2 / 2` from `theta`.
 */
export function quadratic_meta_paths(theta: number, center: number, alpha: number, beta: number, steps: number, delta: number, meta_steps: number): MetaPaths;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_gallery_free: (a: number, b: number) => void;
    readonly __wbg_metapaths_free: (a: number, b: number) => void;
    readonly __wbg_spectrum_free: (a: number, b: number) => void;
    readonly augment_gallery: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
    readonly chain_spectrum: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
    readonly gallery_count: (a: number) => number;
    readonly gallery_descriptions: (a: number) => [number, number];
    readonly gallery_height: (a: number) => number;
    readonly gallery_pixels: (a: number) => [number, number];
    readonly gallery_width: (a: number) => number;
    readonly metapaths_bootstrapped: (a: number) => [number, number];
    readonly metapaths_kl: (a: number) => [number, number];
    readonly metapaths_standard: (a: number) => [number, number];
    readonly quadratic_meta_paths: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
    readonly spectrum_degenerate: (a: number) => number;
    readonly spectrum_eigen_gap: (a: number) => number;
    readonly spectrum_eigenvalues: (a: number) => [number, number];
    readonly spectrum_optimal: (a: number) => number;
    readonly spectrum_random_gaps: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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

/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_gallery_free: (a: number, b: number) => void;
export const __wbg_metapaths_free: (a: number, b: number) => void;
export const __wbg_spectrum_free: (a: number, b: number) => void;
export const augment_gallery: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
export const chain_spectrum: (a: number, b: number, c: number, d: number, e: bigint) => [number, number, number];
export const gallery_count: (a: number) => number;
export const gallery_descriptions: (a: number) => [number, number];
export const gallery_height: (a: number) => number;
export const gallery_pixels: (a: number) => [number, number];
export const gallery_width: (a: number) => number;
export const metapaths_bootstrapped: (a: number) => [number, number];
export const metapaths_kl: (a: number) => [number, number];
export const metapaths_standard: (a: number) => [number, number];
export const quadratic_meta_paths: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number];
export const spectrum_degenerate: (a: number) => number;
export const spectrum_eigen_gap: (a: number) => number;
export const spectrum_eigenvalues: (a: number) => [number, number];
export const spectrum_optimal: (a: number) => number;
export const spectrum_random_gaps: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;

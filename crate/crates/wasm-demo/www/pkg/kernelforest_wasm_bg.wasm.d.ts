/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_demo_free: (a: number, b: number) => void;
export const demo_bands: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
export const demo_curves: (a: number, b: number, c: number) => [number, number, number, number];
export const demo_distance_matrix: (a: number, b: number, c: number, d: number) => [number, number, number, number];
export const demo_grid: (a: number, b: number) => [number, number];
export const demo_new: (a: number, b: number, c: number, d: number) => [number, number, number];
export const demo_train_x: (a: number) => [number, number];
export const demo_train_y: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_start: () => void;

/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_facedemo_free: (a: number, b: number) => void;
export const facedemo_au: (a: number, b: number) => number;
export const facedemo_au_numbers: () => [number, number];
export const facedemo_bone_names: () => [number, number];
export const facedemo_clear: (a: number) => void;
export const facedemo_emotions: (a: number) => [number, number];
export const facedemo_lipsync_active: (a: number) => number;
export const facedemo_new: () => number;
export const facedemo_phrase_length_ms: (a: number) => number;
export const facedemo_project: (a: number, b: number, c: number) => [number, number];
export const facedemo_say: (a: number, b: number, c: number, d: number) => [number, number, number];
export const facedemo_scrub: (a: number, b: number) => void;
export const facedemo_set_au: (a: number, b: number, c: number) => [number, number];
export const facedemo_set_emotion: (a: number, b: number, c: number, d: number) => [number, number];
export const facedemo_set_head: (a: number, b: number, c: number, d: number) => void;
export const facedemo_set_mask: (a: number, b: number) => void;
export const facedemo_visemes: (a: number) => [number, number];
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __externref_drop_slice: (a: number, b: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __externref_table_dealloc: (a: number) => void;
export const __wbindgen_start: () => void;

/* tslint:disable */
/* eslint-disable */
export const memory: WebAssembly.Memory;
export const __wbg_disclosureexplorer_free: (a: number, b: number) => void;
export const __wbg_registrytamper_free: (a: number, b: number) => void;
export const disclosureexplorer_claims: (a: number) => [number, number];
export const disclosureexplorer_new: () => number;
export const disclosureexplorer_present: (a: number, b: number, c: number, d: number, e: number) => [number, number];
export const ladder: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
export const registrytamper_blocks: (a: number) => [number, number];
export const registrytamper_flip: (a: number, b: number, c: number) => [number, number];
export const registrytamper_new: () => number;
export const __wbindgen_exn_store: (a: number) => void;
export const __externref_table_alloc: () => number;
export const __wbindgen_externrefs: WebAssembly.Table;
export const __wbindgen_free: (a: number, b: number, c: number) => void;
export const __wbindgen_malloc: (a: number, b: number) => number;
export const __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
export const __wbindgen_start: () => void;

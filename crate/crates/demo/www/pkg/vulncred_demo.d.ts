/* tslint:disable */
/* eslint-disable */

/**
 * A holder with one freshly issued full credential, choosing what to show.
 */
export class DisclosureExplorer {
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Claims with their values, group and available predicate direction.
     */
    claims(): string;
    constructor();
    /**
     * Derives and verifies a presentation. `reveal` is a JSON array of claim
     * names; `predicates` a JSON array of `{claim, op, threshold}`.
     */
    present(reveal: string, predicates: string): string;
}

/**
 * A small registry whose blocks can be corrupted bit by bit.
 */
export class RegistryTamper {
    free(): void;
    [Symbol.dispose](): void;
    blocks(): string;
    /**
     * Flips one bit of one block's encoding and re-checks the chain.
     */
    flip(block: number, bit: number): string;
    constructor();
}

/**
 * Commits `value` to a fresh ladder and tries to prove
 * `value <direction> threshold`, showing the chain from seed to anchor.
 */
export function ladder(direction: string, v_min: number, v_max: number, value: number, threshold: number): string;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_disclosureexplorer_free: (a: number, b: number) => void;
    readonly __wbg_registrytamper_free: (a: number, b: number) => void;
    readonly disclosureexplorer_claims: (a: number) => [number, number];
    readonly disclosureexplorer_new: () => number;
    readonly disclosureexplorer_present: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly ladder: (a: number, b: number, c: number, d: number, e: number, f: number) => [number, number];
    readonly registrytamper_blocks: (a: number) => [number, number];
    readonly registrytamper_flip: (a: number, b: number, c: number) => [number, number];
    readonly registrytamper_new: () => number;
    readonly __wbindgen_exn_store: (a: number) => void;
    readonly __externref_table_alloc: () => number;
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
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

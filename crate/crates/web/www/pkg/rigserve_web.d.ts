/* tslint:disable */
/* eslint-disable */

export class FaceDemo {
    free(): void;
    [Symbol.dispose](): void;
    au(au: number): number;
    /**
     * The 24 supported AU numbers, in slider order.
     */
    static au_numbers(): Uint8Array;
    /**
     * Facial bone names, matching the point order of [`FaceDemo::project`].
     */
    static bone_names(): string[];
    clear(): void;
    emotions(): string[];
    lipsync_active(): boolean;
    constructor();
    phrase_length_ms(): number;
    /**
     * `[x0, y0, x1, y1, ...]` canvas coordinates of the facial bones.
     */
    project(width: number, height: number): Float64Array;
    /**
     * Builds a phrase track from the demo lexicon and returns its length
     * in ms, release ramp included.
     */
    say(text: string, rate: number): number;
    scrub(t_ms: number): void;
    set_au(au: number, value: number): void;
    /**
     * Replaces every AU with the emotion's combination.
     */
    set_emotion(label: string, intensity: number): void;
    set_head(yaw: number, pitch: number, roll: number): void;
    /**
     * Applies the lip-sync mask even without a phrase, to show which bones
     * the expression layer loses while the mouth is speaking.
     */
    set_mask(on: boolean): void;
    /**
     * Active viseme weights at the scrub position, e.g. `"ae 0.50 i 0.50"`.
     */
    visemes(): string;
}

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_facedemo_free: (a: number, b: number) => void;
    readonly facedemo_au: (a: number, b: number) => number;
    readonly facedemo_au_numbers: () => [number, number];
    readonly facedemo_bone_names: () => [number, number];
    readonly facedemo_clear: (a: number) => void;
    readonly facedemo_emotions: (a: number) => [number, number];
    readonly facedemo_lipsync_active: (a: number) => number;
    readonly facedemo_new: () => number;
    readonly facedemo_phrase_length_ms: (a: number) => number;
    readonly facedemo_project: (a: number, b: number, c: number) => [number, number];
    readonly facedemo_say: (a: number, b: number, c: number, d: number) => [number, number, number];
    readonly facedemo_scrub: (a: number, b: number) => void;
    readonly facedemo_set_au: (a: number, b: number, c: number) => [number, number];
    readonly facedemo_set_emotion: (a: number, b: number, c: number, d: number) => [number, number];
    readonly facedemo_set_head: (a: number, b: number, c: number, d: number) => void;
    readonly facedemo_set_mask: (a: number, b: number) => void;
    readonly facedemo_visemes: (a: number) => [number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __externref_drop_slice: (a: number, b: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
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

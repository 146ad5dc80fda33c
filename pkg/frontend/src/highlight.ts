/** Byte-addressed span highlighting.
 *
 * Extraction spans use byte offsets into the UTF-8 transcript. The text
 * is segmented at every span boundary so overlapping spans (a laterality
 * word inside an anatomy phrase) each keep their own highlight classes.
 * Tampered offsets fail loudly: no silent clipping.
 */

import type { ExtractionSpan } from "./types.js";

export interface Segment {
  text: string;
  /** indexes into the span list covering this segment */
  spanIndexes: number[];
  kinds: string[];
}

export class SpanOffsetError extends Error {}

export function segmentTranscript(transcript: string, spans: ExtractionSpan[]): Segment[] {
  const bytes = new TextEncoder().encode(transcript);
  for (const [i, span] of spans.entries()) {
    if (!(0 <= span.start && span.start < span.end && span.end <= bytes.length)) {
      throw new SpanOffsetError(
        `span ${i} [${span.start}, ${span.end}) is outside the transcript (${bytes.length} bytes)`,
      );
    }
  }
  const boundaries = new Set<number>([0, bytes.length]);
  for (const span of spans) {
    boundaries.add(span.start);
    boundaries.add(span.end);
  }
  const points = [...boundaries].sort((a, b) => a - b);
  const decoder = new TextDecoder("utf-8", { fatal: true });
  const segments: Segment[] = [];
  for (let i = 0; i + 1 < points.length; i += 1) {
    const start = points[i]!;
    const end = points[i + 1]!;
    let text: string;
    try {
      text = decoder.decode(bytes.subarray(start, end));
    } catch {
      throw new SpanOffsetError(`span boundary at byte ${start} splits a UTF-8 sequence`);
    }
    const covering = spans
      .map((span, index) => ({ span, index }))
      .filter(({ span }) => span.start <= start && end <= span.end);
    segments.push({
      text,
      spanIndexes: covering.map(({ index }) => index),
      kinds: [...new Set(covering.map(({ span }) => span.kind))],
    });
  }
  return segments;
}

/** Number of distinct spans that produced at least one highlighted segment. */
export function highlightedSpanCount(segments: Segment[]): number {
  const seen = new Set<number>();
  for (const segment of segments) {
    for (const index of segment.spanIndexes) {
      seen.add(index);
    }
  }
  return seen.size;
}

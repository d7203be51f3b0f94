// Client-side twin of the CLI's duration syntax: a number with an
// optional unit suffix (ms, s, m, h, d); a bare number means seconds.
// Compound strings like "1h30m" are rejected, same as the CLI.

const DURATION_RE = /^\s*(\d+(?:\.\d+)?)\s*(ms|s|m|h|d)?\s*$/;

const UNIT_SECONDS: Record<string, number> = {
  ms: 0.001,
  s: 1,
  m: 60,
  h: 3600,
  d: 86400,
};

/** Seconds for a valid duration string, null otherwise. */
export function parseDuration(text: string): number | null {
  const match = DURATION_RE.exec(text);
  if (!match) return null;
  const value = Number(match[1]);
  const unit = match[2] ?? "s";
  return value * UNIT_SECONDS[unit];
}

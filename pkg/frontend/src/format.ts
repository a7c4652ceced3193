// One formatter for every number on screen, so each rendered value is
// traceable to the exact payload field it came from.

export function formatNumber(value: number | null | undefined, digits = 4): string {
  if (value === null || value === undefined) return "n/a";
  if (!Number.isFinite(value)) return String(value);
  if (value === 0) return "0";
  const text = value.toPrecision(digits);
  // trim trailing zeros that toPrecision leaves on plain decimals
  return text.includes("e") ? text : String(Number(text));
}

/**
 * Canonical JSON serialization, byte-identical to the server's form.
 *
 * The server emits reals in C's %.9g style: 9 significant digits, trailing
 * zeros stripped, scientific notation when the (post-rounding) exponent is
 * below -4 or at least 9, exponents zero-padded to two digits.  Keys keep
 * insertion order and documents end with a newline.
 */

export function fmtReal(x: number): string {
  if (!Number.isFinite(x)) {
    throw new Error(`cannot serialize non-finite real ${x}`);
  }
  if (x === 0) return "0"; // also normalizes -0
  // Integer-valued numbers below 1e9 print as plain digits whether the
  // server wrote them as ints or as %.9g floats; above that the source is
  // assumed to be a float (the scene schema has no large integers).
  if (Number.isInteger(x) && Math.abs(x) < 1e9) return x.toString();
  const sign = x < 0 ? "-" : "";
  const a = Math.abs(x);
  const [mantissaRaw, expRaw] = a.toExponential(8).split("e");
  const exp = parseInt(expRaw, 10); // exponent after rounding to 9 digits
  if (exp < -4 || exp >= 9) {
    let m = mantissaRaw;
    if (m.includes(".")) m = m.replace(/0+$/, "").replace(/\.$/, "");
    const esign = exp < 0 ? "-" : "+";
    const eabs = Math.abs(exp).toString().padStart(2, "0");
    return `${sign}${m}e${esign}${eabs}`;
  }
  let s = a.toFixed(Math.max(0, 8 - exp));
  if (s.includes(".")) s = s.replace(/0+$/, "").replace(/\.$/, "");
  return sign + s;
}

type Json = null | boolean | number | string | Json[] | { [k: string]: Json };

function emit(value: Json, out: string[], indent: number, level: number): void {
  const pad = " ".repeat(indent * level);
  const padIn = " ".repeat(indent * (level + 1));
  if (value === null || typeof value === "boolean") {
    out.push(JSON.stringify(value));
  } else if (typeof value === "number") {
    out.push(fmtReal(value));
  } else if (typeof value === "string") {
    out.push(JSON.stringify(value));
  } else if (Array.isArray(value)) {
    if (value.length === 0) {
      out.push("[]");
      return;
    }
    out.push("[\n");
    value.forEach((v, i) => {
      out.push(padIn);
      emit(v, out, indent, level + 1);
      out.push(i < value.length - 1 ? ",\n" : "\n");
    });
    out.push(pad + "]");
  } else {
    const keys = Object.keys(value);
    if (keys.length === 0) {
      out.push("{}");
      return;
    }
    out.push("{\n");
    keys.forEach((k, i) => {
      out.push(padIn);
      out.push(JSON.stringify(k));
      out.push(": ");
      emit(value[k], out, indent, level + 1);
      out.push(i < keys.length - 1 ? ",\n" : "\n");
    });
    out.push(pad + "}");
  }
}

/** Serialize with the server's canonical layout (2-space indent + newline). */
export function dumpsCanonical(value: unknown, indent = 2): string {
  const out: string[] = [];
  emit(value as Json, out, indent, 0);
  out.push("\n");
  return out.join("");
}

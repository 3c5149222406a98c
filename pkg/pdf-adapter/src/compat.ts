/**
 * Runtime shims for Node 20: pdfjs-dist v6 calls
 * ArrayBuffer.prototype.transferToFixedLength, which landed in Node 21.
 * Without it, font loading throws mid-evaluation and pdfjs silently
 * truncates the page's operator list.
 */

declare global {
  interface ArrayBuffer {
    transferToFixedLength?(newLength?: number): ArrayBuffer;
  }
}

if (typeof ArrayBuffer.prototype.transferToFixedLength !== "function") {
  Object.defineProperty(ArrayBuffer.prototype, "transferToFixedLength", {
    value: function (this: ArrayBuffer, newLength?: number): ArrayBuffer {
      const length = newLength === undefined ? this.byteLength : newLength;
      const out = new ArrayBuffer(length);
      new Uint8Array(out).set(new Uint8Array(this).subarray(0, Math.min(length, this.byteLength)));
      return out;
    },
    writable: true,
    configurable: true,
  });
}

export {};

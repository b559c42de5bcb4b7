/**
 * wire.ts — SOAP-subset envelope codec for the single /soap endpoint.
 *
 * The encoder emits the same canonical byte form the server produces; the
 * decoder is a small strict parser for that canonical shape (elements,
 * self-closing tags, character entities — nothing else travels on this wire).
 */

export const ENVELOPE_NS = "http://schemas.xmlsoap.org/soap/envelope/";
export const APP_NS = "urn:bib-mobile";

export type Fields = Array<[string, string]>;

export interface ResponseEnvelope {
  kind: "response";
  action: string;
  fields: Fields;
}

export interface FaultEnvelope {
  kind: "fault";
  faultCode: string;
  faultString: string;
}

export class WireError extends Error {}

const ACTION_RE = /^[A-Za-z][A-Za-z0-9]*$/;
const NAME_RE = /^[A-Za-z][A-Za-z0-9]*(?:\.[A-Za-z0-9]+)*$/;

function escapeText(value: string): string {
  // \r must travel as a character reference or parsers normalize it away.
  return value
    .replaceAll("&", "&amp;")
    .replaceAll("<", "&lt;")
    .replaceAll(">", "&gt;")
    .replaceAll("\r", "&#13;");
}

function leaf(name: string, value: string): string {
  return value ? `<${name}>${escapeText(value)}</${name}>` : `<${name}/>`;
}

/** Encode a request exactly the way the server's canonical encoder would. */
export function encodeRequest(action: string, params: Fields = [], authToken?: string | null): string {
  if (!ACTION_RE.test(action)) {
    throw new WireError(`bad action name: ${action}`);
  }
  const seen = new Set<string>();
  for (const [name] of params) {
    if (!NAME_RE.test(name) || seen.has(name)) {
      throw new WireError(`bad or duplicate param name: ${name}`);
    }
    seen.add(name);
  }
  let xml = `<Envelope xmlns="${ENVELOPE_NS}">`;
  if (authToken !== undefined && authToken !== null) {
    xml += authToken
      ? `<Header><Auth xmlns="${APP_NS}">${escapeText(authToken)}</Auth></Header>`
      : `<Header><Auth xmlns="${APP_NS}"/></Header>`;
  }
  xml += "<Body>";
  xml += params.length
    ? `<${action} xmlns="${APP_NS}">${params.map(([n, v]) => leaf(n, v)).join("")}</${action}>`
    : `<${action} xmlns="${APP_NS}"/>`;
  xml += "</Body></Envelope>";
  return xml;
}

// -- decoding ---------------------------------------------------------------

interface XmlNode {
  name: string;
  children: XmlNode[];
  text: string;
}

const ENTITIES: Record<string, string> = {
  amp: "&",
  lt: "<",
  gt: ">",
  quot: '"',
  apos: "'",
};

function decodeEntities(raw: string): string {
  return raw.replace(/&(#x?[0-9A-Fa-f]+|[A-Za-z]+);/g, (_, body: string) => {
    if (body.startsWith("#")) {
      const hex = body[1] === "x" || body[1] === "X";
      const code = parseInt(hex ? body.slice(2) : body.slice(1), hex ? 16 : 10);
      if (!Number.isFinite(code) || code < 0 || code > 0x10ffff) {
        throw new WireError(`bad character reference &${body};`);
      }
      return String.fromCodePoint(code);
    }
    const known = ENTITIES[body];
    if (known === undefined) {
      throw new WireError(`unknown entity &${body};`);
    }
    return known;
  });
}

function localName(tag: string): string {
  const colon = tag.indexOf(":");
  return colon === -1 ? tag : tag.slice(colon + 1);
}

class Parser {
  private pos = 0;

  constructor(private readonly input: string) {}

  parseDocument(): XmlNode {
    this.skipWhitespace();
    const root = this.parseElement();
    this.skipWhitespace();
    if (this.pos !== this.input.length) {
      throw new WireError("trailing content after document element");
    }
    return root;
  }

  private skipWhitespace(): void {
    while (this.pos < this.input.length && /\s/.test(this.input[this.pos])) {
      this.pos++;
    }
  }

  private parseElement(): XmlNode {
    if (this.input[this.pos] !== "<") {
      throw new WireError("expected element");
    }
    const open = this.input.indexOf(">", this.pos);
    if (open === -1) {
      throw new WireError("unterminated tag");
    }
    let head = this.input.slice(this.pos + 1, open);
    this.pos = open + 1;
    const selfClosing = head.endsWith("/");
    if (selfClosing) {
      head = head.slice(0, -1);
    }
    const name = localName(head.split(/\s/, 1)[0]);
    if (!name || name.startsWith("?") || name.startsWith("!")) {
      throw new WireError(`unexpected markup <${head}>`);
    }
    const node: XmlNode = { name, children: [], text: "" };
    if (selfClosing) {
      return node;
    }
    // Children: either element content (whitespace + elements) or pure text.
    for (;;) {
      const next = this.input.indexOf("<", this.pos);
      if (next === -1) {
        throw new WireError(`<${name}> never closed`);
      }
      node.text += this.input.slice(this.pos, next);
      this.pos = next;
      if (this.input.startsWith("</", this.pos)) {
        const end = this.input.indexOf(">", this.pos);
        if (end === -1) {
          throw new WireError("unterminated closing tag");
        }
        const closing = localName(this.input.slice(this.pos + 2, end).trim());
        if (closing !== name) {
          throw new WireError(`mismatched </${closing}> inside <${name}>`);
        }
        this.pos = end + 1;
        node.text = decodeEntities(node.text);
        if (node.children.length && node.text.trim()) {
          throw new WireError(`mixed content inside <${name}>`);
        }
        return node;
      }
      node.children.push(this.parseElement());
    }
  }
}

function onlyChild(node: XmlNode, context: string): XmlNode {
  if (node.children.length !== 1) {
    throw new WireError(`${context} must contain exactly one element`);
  }
  return node.children[0];
}

function leafText(node: XmlNode): string {
  if (node.children.length) {
    throw new WireError(`<${node.name}> must be a leaf`);
  }
  return node.text;
}

/** Decode a server reply into a response or fault envelope. */
export function decodeResponse(xml: string): ResponseEnvelope | FaultEnvelope {
  const root = new Parser(xml).parseDocument();
  if (root.name !== "Envelope") {
    throw new WireError("not an Envelope");
  }
  const body = root.children.find((c) => c.name === "Body");
  if (!body || root.children.some((c) => c.name !== "Body" && c.name !== "Header")) {
    throw new WireError("Envelope must hold a Body");
  }
  const payload = onlyChild(body, "Body");

  if (payload.name === "Fault") {
    const code = payload.children.find((c) => c.name === "faultcode");
    const reason = payload.children.find((c) => c.name === "faultstring");
    if (!code || !reason) {
      throw new WireError("Fault needs faultcode and faultstring");
    }
    return { kind: "fault", faultCode: leafText(code), faultString: leafText(reason) };
  }

  if (!payload.name.endsWith("Response")) {
    throw new WireError(`unexpected body element <${payload.name}>`);
  }
  const action = payload.name.slice(0, -"Response".length);
  if (!ACTION_RE.test(action)) {
    throw new WireError(`bad action name ${action}`);
  }
  const fields: Fields = payload.children.map((child) => {
    if (!NAME_RE.test(child.name)) {
      throw new WireError(`bad field name ${child.name}`);
    }
    return [child.name, leafText(child)];
  });
  return { kind: "response", action, fields };
}

/** First field with the given name; WireError if the reply lacks it. */
export function fieldValue(fields: Fields, name: string): string {
  for (const [key, value] of fields) {
    if (key === name) {
      return value;
    }
  }
  throw new WireError(`reply is missing field ${name}`);
}

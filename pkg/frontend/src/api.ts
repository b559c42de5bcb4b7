/**
 * api.ts — thin client for POST {base}/soap.
 *
 * Read-only by construction: the only actions this client can issue are the
 * ones enumerated here, and none of them mutate server data.
 */

import { APP_NS, Fields, decodeResponse, encodeRequest, WireError } from "./wire.js";

export type Action =
  | "Authenticate"
  | "GetLastUpdate"
  | "GetChildren"
  | "GetMeasurements"
  | "GetReferenceCurve"
  | "RequestIdRecovery";

export class AuthFailed extends Error {}
export class NetworkFailure extends Error {}
export class ProtocolFailure extends Error {}

export interface Endpoint {
  call(action: Action, params?: Fields, token?: string | null): Promise<Fields>;
}

export class SoapClient implements Endpoint {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = (...args) => fetch(...args),
  ) {}

  async call(action: Action, params: Fields = [], token?: string | null): Promise<Fields> {
    const body = encodeRequest(action, params, token);
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl.replace(/\/$/, "")}/soap`, {
        method: "POST",
        headers: {
          "Content-Type": "text/xml; charset=utf-8",
          SOAPAction: `"${APP_NS}#${action}"`,
        },
        body,
      });
    } catch (err) {
      throw new NetworkFailure(String(err));
    }
    let reply;
    try {
      reply = decodeResponse(await response.text());
    } catch (err) {
      if (err instanceof WireError) {
        throw new ProtocolFailure(err.message);
      }
      throw new NetworkFailure(String(err));
    }
    if (reply.kind === "fault") {
      if (reply.faultCode === "Client.AuthFailed") {
        throw new AuthFailed(reply.faultString);
      }
      throw new ProtocolFailure(`${reply.faultCode}: ${reply.faultString}`);
    }
    if (reply.action !== action) {
      throw new ProtocolFailure(`reply for ${reply.action}, expected ${action}`);
    }
    return reply.fields;
  }
}

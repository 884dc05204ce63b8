// Thin typed client over the service HTTP surface. Only the documented
// endpoints are used; errors carry the status code so callers can show an
// auth banner on 401 distinctly from outage banners.

import type {
  Alert,
  AlertPage,
  LabelValue,
  SessionDetail,
  Stats,
  ThreatRepo,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
  }

  get isAuthError(): boolean {
    return this.status === 401;
  }
}

export interface ClientConfig {
  baseUrl: string;
  token: string;
  fetchImpl?: typeof fetch;
}

export interface AlertFilters {
  state?: string;
  severity?: string;
  page?: number;
}

export class ServiceClient {
  private readonly fetchImpl: typeof fetch;

  constructor(private readonly config: ClientConfig) {
    this.fetchImpl = config.fetchImpl ?? fetch;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.config.baseUrl}${path}`, {
        ...init,
        headers: {
          Authorization: `Bearer ${this.config.token}`,
          "Content-Type": "application/json",
          ...(init?.headers ?? {}),
        },
      });
    } catch (err) {
      throw new ApiError(0, `service unreachable: ${String(err)}`);
    }
    if (!response.ok) {
      let detail = response.statusText;
      try {
        const body = (await response.json()) as { detail?: string };
        if (body.detail) detail = body.detail;
      } catch {
        // keep the status text
      }
      throw new ApiError(response.status, detail);
    }
    return (await response.json()) as T;
  }

  listAlerts(filters: AlertFilters = {}): Promise<AlertPage> {
    const params = new URLSearchParams();
    if (filters.state) params.set("state", filters.state);
    if (filters.severity) params.set("severity", filters.severity);
    if (filters.page) params.set("page", String(filters.page));
    const query = params.toString();
    return this.request<AlertPage>(`/v1/alerts${query ? `?${query}` : ""}`);
  }

  getAlert(alertId: string): Promise<Alert> {
    return this.request<Alert>(`/v1/alerts/${encodeURIComponent(alertId)}`);
  }

  labelAlert(
    alertId: string,
    label: LabelValue,
    analystId: string,
    note = "",
  ): Promise<Alert> {
    return this.request<Alert>(`/v1/alerts/${encodeURIComponent(alertId)}/label`, {
      method: "POST",
      body: JSON.stringify({ label, analyst_id: analystId, note }),
    });
  }

  getSession(sessionId: string): Promise<SessionDetail> {
    return this.request<SessionDetail>(`/v1/sessions/${encodeURIComponent(sessionId)}`);
  }

  getThreatRepo(): Promise<ThreatRepo> {
    return this.request<ThreatRepo>("/v1/threat-repo");
  }

  curateGuidance(techniqueId: string, text: string, analystId: string): Promise<unknown> {
    return this.request(`/v1/threat-repo/${encodeURIComponent(techniqueId)}/guidance`, {
      method: "POST",
      body: JSON.stringify({ text, analyst_id: analystId }),
    });
  }

  getStats(window = "all"): Promise<Stats> {
    return this.request<Stats>(`/v1/stats?window=${encodeURIComponent(window)}`);
  }

  ingestSessions(payload: unknown[]): Promise<{ accepted: number }> {
    return this.request(`/v1/telemetry/sessions`, {
      method: "POST",
      body: JSON.stringify(payload),
    });
  }
}

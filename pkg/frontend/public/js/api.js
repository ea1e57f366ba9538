/**
 * Typed client for the QA service.
 *
 * Endpoints consumed: POST /v1/query, POST /v1/match, GET /v1/chunks/{id},
 * GET /v1/health. The only configuration is the service base URL.
 */
export class ServiceError extends Error {
    constructor(status, code, message) {
        super(message);
        this.status = status;
        this.code = code;
    }
}
async function parseError(response) {
    let code = "unknown";
    let message = `service returned status ${response.status}`;
    try {
        const body = (await response.json());
        if (body.error) {
            code = body.error.code ?? code;
            message = body.error.message ?? message;
        }
    }
    catch {
        // non-JSON error body: keep the generic message
    }
    return new ServiceError(response.status, code, message);
}
export class ApiClient {
    constructor(baseUrl) {
        this.baseUrl = baseUrl.replace(/\/+$/, "");
    }
    async post(path, payload, signal) {
        const response = await fetch(this.baseUrl + path, {
            method: "POST",
            headers: { "Content-Type": "application/json" },
            body: JSON.stringify(payload),
            signal,
        });
        if (!response.ok) {
            throw await parseError(response);
        }
        return (await response.json());
    }
    async get(path, signal) {
        const response = await fetch(this.baseUrl + path, { signal });
        if (!response.ok) {
            throw await parseError(response);
        }
        return (await response.json());
    }
    query(question, signal) {
        return this.post("/v1/query", { question }, signal);
    }
    match(request, signal) {
        return this.post("/v1/match", request, signal);
    }
    chunk(chunkId, signal) {
        return this.get(`/v1/chunks/${encodeURIComponent(chunkId)}`, signal);
    }
    health(signal) {
        return this.get("/v1/health", signal);
    }
}

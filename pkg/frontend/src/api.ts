// Typed client over the control plane's admin API. Every view renders from
// what these calls return; nothing in the UI is a source of truth.

export type OsFile = {
    filename: string
    size: number
    digest: string
    uploaded_at: number
}

export type OsDef = {
    os_id: string
    name: string
    boot_template: string
    kernel_params: string
    created_at: number
    files: OsFile[]
}

export type User = {
    username: string
    assigned_os: string
    active: boolean
    created_at: number
}

export type LogRow = {
    id: number
    timestamp: number
    username: string
    mac: string
    client_ip: string
    success: boolean
    failure_reason: string | null
}

export type LogFilter = {
    username?: string
    mac?: string
    success?: boolean
    page?: number
}

export class ApiError extends Error {
    constructor(public status: number, public code: string, detail: string) {
        super(detail)
    }
}

export class AdminApi {
    constructor(public baseUrl: string, private token: string) {}

    // upload.ts drives XMLHttpRequest itself and needs the header value
    rawToken(): string {
        return this.token
    }

    private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
        const headers: Record<string, string> = { "Authorization": `Bearer ${this.token}` }
        let payload: string | undefined
        if (body !== undefined) {
            headers["Content-Type"] = "application/json"
            payload = JSON.stringify(body)
        }
        const response = await fetch(this.baseUrl + path, { method, headers, body: payload })
        return unwrap<T>(response)
    }

    listOs(): Promise<OsDef[]> {
        return this.request("GET", "/api/os")
    }

    createOs(name: string, bootTemplate: string, kernelParams: string): Promise<OsDef> {
        return this.request("POST", "/api/os", {
            name: name,
            boot_template: bootTemplate,
            kernel_params: kernelParams,
        })
    }

    getOs(osId: string): Promise<OsDef> {
        return this.request("GET", `/api/os/${encodeURIComponent(osId)}`)
    }

    // plain upload without progress; the OS editor uses upload.ts instead
    async uploadFile(osId: string, filename: string, data: BlobPart): Promise<OsFile> {
        const path = `/api/os/${encodeURIComponent(osId)}/files?filename=${encodeURIComponent(filename)}`
        const response = await fetch(this.baseUrl + path, {
            method: "POST",
            headers: { "Authorization": `Bearer ${this.token}` },
            body: new Blob([data]),
        })
        return unwrap(response)
    }

    listUsers(): Promise<User[]> {
        return this.request("GET", "/api/users")
    }

    createUser(username: string, password: string, osId: string): Promise<User> {
        return this.request("POST", "/api/users", {
            username: username,
            password: password,
            os_id: osId,
        })
    }

    deactivateUser(username: string): Promise<User> {
        return this.request("DELETE", `/api/users/${encodeURIComponent(username)}`)
    }

    assignOs(username: string, osId: string): Promise<User> {
        return this.request("PUT", `/api/users/${encodeURIComponent(username)}/os`, { os_id: osId })
    }

    logs(filter: LogFilter = {}): Promise<LogRow[]> {
        const q = new URLSearchParams()
        if (filter.username) q.set("username", filter.username)
        if (filter.mac) q.set("mac", filter.mac)
        if (filter.success !== undefined) q.set("success", String(filter.success))
        if (filter.page) q.set("page", String(filter.page))
        const qs = q.toString()
        return this.request("GET", "/api/logs" + (qs ? `?${qs}` : ""))
    }
}

async function unwrap<T>(response: Response): Promise<T> {
    if (response.ok) {
        return response.json() as Promise<T>
    }
    let code = "error"
    let detail = `${response.status}`
    try {
        const body = await response.json()
        code = body.error ?? code
        detail = body.detail ?? detail
    } catch {
        // non-JSON error body; keep the status text
    }
    throw new ApiError(response.status, code, detail)
}

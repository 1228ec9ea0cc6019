// Boot-attempt log viewer. Polls the control plane and re-renders from each
// response; the table never mutates rows locally, so what you see is whatever
// the server said last. When a poll fails the old rows stay up behind a
// stale-data banner rather than vanishing.

import { AdminApi, LogRow } from "./api.js"

function esc(s: string): string {
    return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;")
}

function fmtTime(epochSeconds: number): string {
    const d = new Date(epochSeconds * 1000)
    if (isNaN(d.getTime())) return String(epochSeconds)
    return d.toISOString().replace("T", " ").slice(0, 19)
}

export class LogTable {
    root: HTMLElement
    banner: HTMLElement
    body: HTMLElement
    pageLabel: HTMLElement

    private userInput: HTMLInputElement
    private macInput: HTMLInputElement
    private failedOnly: HTMLInputElement
    private page = 0 // server pages are 0-indexed, newest first
    private timer: ReturnType<typeof setInterval> | null = null

    constructor(private api: AdminApi) {
        this.root = document.createElement("section")
        this.root.className = "log-viewer"

        const controls = document.createElement("div")
        controls.className = "log-controls"
        this.userInput = document.createElement("input")
        this.userInput.placeholder = "filter username"
        this.macInput = document.createElement("input")
        this.macInput.placeholder = "filter MAC"
        this.failedOnly = document.createElement("input")
        this.failedOnly.type = "checkbox"
        this.failedOnly.id = "failed-only"
        const failedLabel = document.createElement("label")
        failedLabel.htmlFor = "failed-only"
        failedLabel.textContent = "failures only"
        const apply = document.createElement("button")
        apply.textContent = "Apply"
        apply.onclick = () => { this.page = 0; void this.poll() }
        controls.append(this.userInput, this.macInput, this.failedOnly, failedLabel, apply)

        this.banner = document.createElement("div")
        this.banner.className = "stale-banner"
        this.banner.style.display = "none"
        this.banner.textContent = "Control plane unreachable, showing last known data"

        const table = document.createElement("table")
        table.className = "log-table"
        const head = document.createElement("thead")
        head.innerHTML =
            "<tr><th>Time</th><th>User</th><th>MAC</th><th>Client IP</th>" +
            "<th>Result</th><th>Reason</th></tr>"
        this.body = document.createElement("tbody")
        table.append(head, this.body)

        const pager = document.createElement("div")
        pager.className = "pager"
        const prev = document.createElement("button")
        prev.textContent = "Newer"
        prev.onclick = () => { if (this.page > 0) { this.page--; void this.poll() } }
        const next = document.createElement("button")
        next.textContent = "Older"
        next.onclick = () => { this.page++; void this.poll() }
        this.pageLabel = document.createElement("span")
        this.pageLabel.textContent = "page 1"
        pager.append(prev, this.pageLabel, next)

        this.root.append(controls, this.banner, table, pager)
    }

    async poll(): Promise<void> {
        let rows: LogRow[]
        try {
            rows = await this.api.logs({
                username: this.userInput.value.trim() || undefined,
                mac: this.macInput.value.trim() || undefined,
                success: this.failedOnly.checked ? false : undefined,
                page: this.page,
            })
        } catch {
            this.banner.style.display = ""
            return
        }
        this.banner.style.display = "none"
        this.render(rows)
    }

    private render(rows: LogRow[]): void {
        this.body.textContent = ""
        this.pageLabel.textContent = `page ${this.page + 1}`
        if (rows.length === 0) {
            const tr = document.createElement("tr")
            const td = document.createElement("td")
            td.colSpan = 6
            td.className = "empty-state"
            td.textContent = this.page === 0
                ? "No boot attempts recorded yet"
                : "No more entries"
            tr.append(td)
            this.body.append(tr)
            return
        }
        for (const row of rows) {
            const tr = document.createElement("tr")
            const badge = row.success
                ? '<span class="badge badge-ok">success</span>'
                : '<span class="badge badge-fail">failure</span>'
            tr.innerHTML =
                `<td>${fmtTime(row.timestamp)}</td>` +
                `<td>${esc(row.username)}</td>` +
                `<td class="mono">${esc(row.mac)}</td>` +
                `<td class="mono">${esc(row.client_ip)}</td>` +
                `<td>${badge}</td>` +
                `<td>${esc(row.failure_reason ?? "")}</td>`
            this.body.append(tr)
        }
    }

    start(intervalMs = 2000): void {
        this.stop()
        void this.poll()
        this.timer = setInterval(() => void this.poll(), intervalMs)
    }

    stop(): void {
        if (this.timer !== null) {
            clearInterval(this.timer)
            this.timer = null
        }
    }
}

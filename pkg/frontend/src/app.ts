// Admin console entry point. Wires the three views behind a tab bar and a
// token prompt. The token lives in memory; it only touches sessionStorage
// when the operator ticks the remember box, and never localStorage.

import { AdminApi } from "./api.js"
import { OsEditor } from "./oseditor.js"
import { UserPanel } from "./userpanel.js"
import { LogTable } from "./logtable.js"

const TOKEN_KEY = "sdboot-admin-token"

function readRememberedToken(): string {
    try {
        return sessionStorage.getItem(TOKEN_KEY) ?? ""
    } catch {
        return ""
    }
}

function storeToken(token: string, remember: boolean): void {
    try {
        if (remember) sessionStorage.setItem(TOKEN_KEY, token)
        else sessionStorage.removeItem(TOKEN_KEY)
    } catch {
        // storage blocked; the in-memory copy still works for this page
    }
}

export function buildLogin(onSubmit: (token: string, remember: boolean) => void): HTMLElement {
    const box = document.createElement("div")
    box.className = "login-box"
    const title = document.createElement("h2")
    title.textContent = "Boot control plane"
    const tokenInput = document.createElement("input")
    tokenInput.type = "password"
    tokenInput.placeholder = "admin token"
    tokenInput.value = readRememberedToken()
    const remember = document.createElement("input")
    remember.type = "checkbox"
    remember.id = "remember-token"
    const rememberLabel = document.createElement("label")
    rememberLabel.htmlFor = "remember-token"
    rememberLabel.textContent = "keep for this browser session"
    const go = document.createElement("button")
    go.textContent = "Open console"
    go.onclick = () => {
        if (tokenInput.value) onSubmit(tokenInput.value, remember.checked)
    }
    box.append(title, tokenInput, remember, rememberLabel, go)
    return box
}

export class App {
    root: HTMLElement
    private logs: LogTable | null = null

    constructor(private api: AdminApi) {
        this.root = document.createElement("div")
        this.root.className = "console"
    }

    async mount(): Promise<void> {
        const osEditor = new OsEditor(this.api)
        const users = new UserPanel(this.api)
        this.logs = new LogTable(this.api)
        // a new OS should show up in the user form's dropdown right away
        osEditor.onchange = () => void users.refresh()

        const tabs = document.createElement("nav")
        tabs.className = "tabs"
        const panes: [string, HTMLElement][] = [
            ["Operating systems", osEditor.root],
            ["Users", users.root],
            ["Boot log", this.logs.root],
        ]
        const buttons: HTMLButtonElement[] = []
        for (const [label, pane] of panes) {
            const btn = document.createElement("button")
            btn.textContent = label
            btn.onclick = () => this.show(pane, panes, buttons, btn)
            tabs.append(btn)
            buttons.push(btn)
        }
        this.root.append(tabs)
        for (const [, pane] of panes) {
            pane.style.display = "none"
            this.root.append(pane)
        }

        await Promise.all([osEditor.refresh(), users.refresh()])
        this.show(panes[0][1], panes, buttons, buttons[0])
    }

    private show(active: HTMLElement, panes: [string, HTMLElement][],
        buttons: HTMLButtonElement[], activeBtn: HTMLButtonElement): void {
        for (const [, pane] of panes) {
            pane.style.display = pane === active ? "" : "none"
        }
        for (const btn of buttons) {
            btn.className = btn === activeBtn ? "tab-active" : ""
        }
        // only poll while the log pane is actually visible
        if (this.logs) {
            if (active === this.logs.root) this.logs.start()
            else this.logs.stop()
        }
    }
}

export function main(): void {
    const host = document.getElementById("app")
    if (!host) return
    const login = buildLogin((token, remember) => {
        storeToken(token, remember)
        login.remove()
        const api = new AdminApi("", token)
        const app = new App(api)
        host.append(app.root)
        void app.mount()
    })
    host.append(login)
}

if (typeof document !== "undefined" && document.readyState !== "loading") {
    main()
} else if (typeof document !== "undefined") {
    document.addEventListener("DOMContentLoaded", main)
}

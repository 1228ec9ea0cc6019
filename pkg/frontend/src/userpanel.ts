// User management: create users against a live OS list, deactivate them,
// move them between OSes. Every change is followed by a server re-fetch so
// the table shows what the control plane stored, not what we hoped it did.

import { AdminApi, ApiError, OsDef, User } from "./api.js"

export class UserPanel {
    root: HTMLElement
    error: HTMLElement
    body: HTMLElement

    nameInput: HTMLInputElement
    passInput: HTMLInputElement
    osSelect: HTMLSelectElement
    createBtn: HTMLButtonElement

    private osIds: string[] = []

    constructor(private api: AdminApi) {
        this.root = document.createElement("section")
        this.root.className = "user-panel"

        const form = document.createElement("div")
        form.className = "user-form"
        this.nameInput = document.createElement("input")
        this.nameInput.placeholder = "username"
        this.passInput = document.createElement("input")
        this.passInput.type = "password"
        this.passInput.placeholder = "password"
        this.osSelect = document.createElement("select")
        this.createBtn = document.createElement("button")
        this.createBtn.textContent = "Create user"
        this.createBtn.onclick = () => void this.submit()

        this.error = document.createElement("div")
        this.error.className = "inline-error"
        this.error.style.display = "none"

        form.append(this.nameInput, this.passInput, this.osSelect,
            this.createBtn, this.error)

        const table = document.createElement("table")
        table.className = "user-table"
        const head = document.createElement("thead")
        head.innerHTML = "<tr><th>User</th><th>OS</th><th>State</th><th></th><th></th></tr>"
        this.body = document.createElement("tbody")
        table.append(head, this.body)

        this.root.append(form, table)
    }

    private showError(msg: string): void {
        this.error.textContent = msg
        this.error.style.display = ""
    }

    async submit(): Promise<void> {
        this.error.style.display = "none"
        const username = this.nameInput.value.trim()
        const password = this.passInput.value
        if (!username || !password) {
            this.showError("username and password are required")
            return
        }
        if (!this.osSelect.value) {
            this.showError("create an OS first; every user needs one assigned")
            return
        }
        try {
            await this.api.createUser(username, password, this.osSelect.value)
        } catch (e) {
            this.showError(e instanceof ApiError ? e.message : String(e))
            return
        }
        this.nameInput.value = ""
        this.passInput.value = ""
        await this.refresh()
    }

    // pulls both lists; the OS dropdowns always reflect the live OS set
    async refresh(): Promise<void> {
        const [defs, users] = await Promise.all([
            this.api.listOs(), this.api.listUsers(),
        ])
        this.osIds = defs.map(d => d.os_id)
        fillSelect(this.osSelect, defs, this.osSelect.value)
        this.renderUsers(users)
    }

    private renderUsers(users: User[]): void {
        this.body.textContent = ""
        if (users.length === 0) {
            const tr = document.createElement("tr")
            const td = document.createElement("td")
            td.colSpan = 5
            td.className = "empty-state"
            td.textContent = "No users yet"
            tr.append(td)
            this.body.append(tr)
            return
        }
        for (const user of users) {
            this.body.append(this.renderUser(user))
        }
    }

    private renderUser(user: User): HTMLElement {
        const tr = document.createElement("tr")
        if (!user.active) tr.className = "deactivated"

        const name = document.createElement("td")
        name.textContent = user.username
        const os = document.createElement("td")
        os.className = "mono"
        os.textContent = user.assigned_os
        const state = document.createElement("td")
        state.innerHTML = user.active
            ? '<span class="badge badge-ok">active</span>'
            : '<span class="badge badge-fail">deactivated</span>'

        const moveCell = document.createElement("td")
        const moveSelect = document.createElement("select")
        for (const id of this.osIds) {
            const opt = document.createElement("option")
            opt.value = id
            opt.textContent = id
            if (id === user.assigned_os) opt.selected = true
            moveSelect.append(opt)
        }
        const moveBtn = document.createElement("button")
        moveBtn.textContent = "Reassign"
        moveBtn.onclick = () => void this.reassign(user.username, moveSelect.value)
        moveCell.append(moveSelect, moveBtn)

        const deactCell = document.createElement("td")
        if (user.active) {
            const btn = document.createElement("button")
            btn.textContent = "Deactivate"
            btn.onclick = () => void this.deactivate(user.username)
            deactCell.append(btn)
        }

        tr.append(name, os, state, moveCell, deactCell)
        return tr
    }

    private async deactivate(username: string): Promise<void> {
        this.error.style.display = "none"
        try {
            await this.api.deactivateUser(username)
        } catch (e) {
            this.showError(e instanceof ApiError ? e.message : String(e))
            return
        }
        await this.refresh()
    }

    private async reassign(username: string, osId: string): Promise<void> {
        this.error.style.display = "none"
        try {
            await this.api.assignOs(username, osId)
        } catch (e) {
            this.showError(e instanceof ApiError ? e.message : String(e))
            return
        }
        await this.refresh()
    }
}

function fillSelect(select: HTMLSelectElement, defs: OsDef[], keep: string): void {
    select.textContent = ""
    for (const def of defs) {
        const opt = document.createElement("option")
        opt.value = def.os_id
        opt.textContent = `${def.name} (${def.os_id})`
        if (def.os_id === keep) opt.selected = true
        select.append(opt)
    }
}

// OS definition editor: create an OS from a boot template, then attach boot
// artifacts to it. The template is run through the local syntax checker
// before anything goes over the wire; a bad script never reaches the server.

import { AdminApi, ApiError, OsDef } from "./api.js"
import { checkTemplate } from "./template.js"
import { browserXhr, uploadWithProgress, XhrLike } from "./upload.js"

const STARTER_TEMPLATE = `#!ipxe
kernel {{base_url}}/files/{{os_id}}/vmlinuz
initrd {{base_url}}/files/{{os_id}}/root.img
boot
`

export class OsEditor {
    root: HTMLElement
    error: HTMLElement
    listBox: HTMLElement

    nameInput: HTMLInputElement
    paramsInput: HTMLInputElement
    templateInput: HTMLTextAreaElement
    createBtn: HTMLButtonElement

    // number of createOs calls that actually went out, so tests can assert
    // that a rejected template produced zero requests
    apiCalls = 0

    onchange: (() => void) | null = null

    constructor(
        private api: AdminApi,
        private xhrFactory?: () => XhrLike,
    ) {
        this.root = document.createElement("section")
        this.root.className = "os-editor"

        const form = document.createElement("div")
        form.className = "os-form"
        this.nameInput = document.createElement("input")
        this.nameInput.placeholder = "OS name"
        this.paramsInput = document.createElement("input")
        this.paramsInput.placeholder = "kernel params (optional)"
        this.templateInput = document.createElement("textarea")
        this.templateInput.rows = 8
        this.templateInput.value = STARTER_TEMPLATE
        this.createBtn = document.createElement("button")
        this.createBtn.textContent = "Create OS"
        this.createBtn.onclick = () => void this.submit()

        this.error = document.createElement("div")
        this.error.className = "inline-error"
        this.error.style.display = "none"

        form.append(this.nameInput, this.paramsInput, this.templateInput,
            this.error, this.createBtn)

        this.listBox = document.createElement("div")
        this.listBox.className = "os-list"

        this.root.append(form, this.listBox)
    }

    private showError(msg: string): void {
        this.error.textContent = msg
        this.error.style.display = ""
    }

    async submit(): Promise<void> {
        this.error.style.display = "none"
        const template = this.templateInput.value
        const syntax = checkTemplate(template)
        if (syntax !== null) {
            this.showError(`template error: ${syntax}`)
            return
        }
        const name = this.nameInput.value.trim()
        if (!name) {
            this.showError("name is required")
            return
        }
        this.apiCalls++
        try {
            await this.api.createOs(name, template, this.paramsInput.value.trim())
        } catch (e) {
            this.showError(e instanceof ApiError ? e.message : String(e))
            return
        }
        this.nameInput.value = ""
        await this.refresh()
        this.onchange?.()
    }

    async refresh(): Promise<void> {
        const defs = await this.api.listOs()
        this.renderList(defs)
    }

    private renderList(defs: OsDef[]): void {
        this.listBox.textContent = ""
        if (defs.length === 0) {
            const p = document.createElement("p")
            p.className = "empty-state"
            p.textContent = "No operating systems defined yet"
            this.listBox.append(p)
            return
        }
        for (const def of defs) {
            this.listBox.append(this.renderOs(def))
        }
    }

    private renderOs(def: OsDef): HTMLElement {
        const card = document.createElement("div")
        card.className = "os-card"
        const title = document.createElement("h3")
        title.textContent = `${def.name} (${def.os_id})`
        card.append(title)

        const files = document.createElement("ul")
        files.className = "file-list"
        for (const f of def.files) {
            const li = document.createElement("li")
            li.textContent = `${f.filename}  ${f.size} bytes  ${f.digest.slice(0, 12)}`
            files.append(li)
        }
        card.append(files)

        const picker = document.createElement("input")
        picker.type = "file"
        const bar = document.createElement("progress")
        bar.max = 1
        bar.value = 0
        bar.style.display = "none"
        const uploadBtn = document.createElement("button")
        uploadBtn.textContent = "Upload file"
        uploadBtn.onclick = () => void this.upload(def.os_id, picker, bar)
        card.append(picker, uploadBtn, bar)
        return card
    }

    private async upload(osId: string, picker: HTMLInputElement,
        bar: HTMLProgressElement): Promise<void> {
        this.error.style.display = "none"
        const file = picker.files?.[0]
        if (!file) {
            this.showError("pick a file first")
            return
        }
        bar.style.display = ""
        bar.value = 0
        try {
            await uploadWithProgress(
                this.api.baseUrl, this.api.rawToken(), osId, file.name, file,
                (sent, total) => { if (total > 0) bar.value = sent / total },
                this.xhrFactory ?? browserXhr,
            )
        } catch (e) {
            this.showError(e instanceof ApiError ? e.message : String(e))
            return
        } finally {
            bar.style.display = "none"
        }
        await this.refresh()
    }
}

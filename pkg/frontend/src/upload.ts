// File upload with progress callbacks, XMLHttpRequest because fetch has no
// upload progress. The factory argument exists so tests can hand in a fake.

import { ApiError, OsFile } from "./api.js"

export type ProgressFn = (sent: number, total: number) => void

export type XhrLike = {
    open(method: string, url: string): void
    setRequestHeader(name: string, value: string): void
    send(body: unknown): void
    status: number
    responseText: string
    onload: (() => void) | null
    onerror: (() => void) | null
    upload: { onprogress: ((ev: { loaded: number; total: number }) => void) | null }
}

// the real thing satisfies the contract at runtime; its handler slots are
// just declared wider (they pass an event our handlers ignore)
export function browserXhr(): XhrLike {
    return new XMLHttpRequest() as unknown as XhrLike
}

export function uploadWithProgress(
    baseUrl: string,
    token: string,
    osId: string,
    filename: string,
    data: Blob | ArrayBuffer | Uint8Array,
    onProgress: ProgressFn,
    xhrFactory: () => XhrLike = browserXhr,
): Promise<OsFile> {
    const url = `${baseUrl}/api/os/${encodeURIComponent(osId)}/files?filename=${encodeURIComponent(filename)}`
    return new Promise((resolve, reject) => {
        const xhr = xhrFactory()
        xhr.open("POST", url)
        xhr.setRequestHeader("Authorization", `Bearer ${token}`)
        xhr.upload.onprogress = (ev) => onProgress(ev.loaded, ev.total)
        xhr.onload = () => {
            let body: any = null
            try {
                body = JSON.parse(xhr.responseText)
            } catch {
                // error path below reports the status instead
            }
            if (xhr.status === 201 && body) {
                resolve(body as OsFile)
            } else {
                reject(new ApiError(xhr.status, body?.error ?? "upload_failed",
                    body?.detail ?? `upload ended with status ${xhr.status}`))
            }
        }
        xhr.onerror = () => reject(new ApiError(0, "network", "upload failed: network error"))
        xhr.send(data)
    })
}
